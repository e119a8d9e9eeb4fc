use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ergodic_cat::experiment::{
    level_statistics, oracle_check, resolve_output_dir, run_batch, run_experiment, ExperimentConfig,
};
use ergodic_cat::Result;

#[derive(Parser)]
#[command(name = "ergodic-cat", version, about = "Equilibration of cat states in a disordered XXX chain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the quench experiment and write report.json plus CSV series.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Number of disorder realizations, seeds counting up from the configured one.
        #[arg(long, default_value_t = 1)]
        realizations: usize,
        /// Output directory; overrides ERGODIC_CAT_OUTPUT_DIR and the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean level-spacing ratio over disorder realizations.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        realizations: usize,
    },
    /// Monte-Carlo moments of H_R and Q against the analytic values.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 2)]
        order: usize,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
}

fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Run { config, realizations, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = resolve_output_dir(&cfg, out.as_deref());
            if realizations == 1 {
                let report = run_experiment(&cfg, &dir)?;
                Ok(serde_json::to_string_pretty(&report)?)
            } else {
                let summary = run_batch(&cfg, realizations, &dir)?;
                Ok(serde_json::to_string_pretty(&summary)?)
            }
        }
        Command::Spectrum { config, realizations } => {
            let cfg = ExperimentConfig::load(&config)?;
            Ok(serde_json::to_string_pretty(&level_statistics(&cfg, realizations)?)?)
        }
        Command::Oracle { config, order, samples } => {
            let cfg = ExperimentConfig::load(&config)?;
            Ok(serde_json::to_string_pretty(&oracle_check(&cfg, order, samples)?)?)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(out) => {
            let _ = writeln!(std::io::stdout(), "{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
