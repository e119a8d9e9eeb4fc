//! The quench experiment end to end: build, select states, predict, evolve, compare.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve_expectation, time_stats, EvolveOptions, TimeSeries};
use crate::ensemble::{
    cat_q_variance_closed_form, overlap_diagnostics, second_moment_expectation, OverlapDiagnostics,
    CLOSED_FORM_OVERLAP_THRESHOLD,
};
use crate::error::{Error, Result, StageContext};
use crate::haar::{estimate_moments, MomentEstimate};
use crate::operator::{CVector, HermitianOperator};
use crate::spectral::{
    cluster_sectors, default_degeneracy_tol, diagonalize, eigenvalues, level_spacing_ratio, EigenSystem,
    SectorPartition,
};
use crate::spin_chain::{build_basis, build_hamiltonian, build_projector_observable, ChainTerms, DisorderRealization, SpinBasis};

use super::config::{ExperimentConfig, Protocol};
use super::states::{find_product_eigenstates, half_chain_spectrum, prepare_protocol_state, EdgeTarget};

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "ERGODIC_CAT_OUTPUT_DIR";
pub const OBSERVABLES: [&str; 2] = ["H_R", "Q"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumDiagnostics {
    pub dim: usize,
    /// `None` when the sector has fewer than three levels.
    pub mean_level_spacing_ratio: Option<f64>,
    pub e_min: f64,
    pub e_max: f64,
    pub degeneracy_tol: f64,
    pub n_sectors: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateDiagnostics {
    /// Energy of `Φ1` with respect to `H_L + H_R`.
    pub e1: f64,
    pub e2: f64,
    pub max_overlap: f64,
    pub overlap_sum: f64,
    pub closed_form_applicable: bool,
    /// Small-overlap estimate of the cat-state `Q` variance, when applicable.
    pub cat_q_variance_closed_form: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableReport {
    pub name: String,
    pub theory_mean: f64,
    pub theory_sigma: f64,
    pub numeric_mean: f64,
    pub numeric_mean_ci: f64,
    pub numeric_sigma: f64,
    pub numeric_sigma_ci: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub n_samples: usize,
    /// Order-1 estimates, one per observable.
    pub means: Vec<MomentEstimate>,
    /// Order-2 estimates over observable pairs.
    pub second_moments: Vec<MomentEstimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub protocol: Protocol,
    pub observables: Vec<ObservableReport>,
    pub monte_carlo: Option<MonteCarloReport>,
}

impl ProtocolReport {
    pub fn observable(&self, name: &str) -> Option<&ObservableReport> {
        self.observables.iter().find(|o| o.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub generated_unix_secs: u64,
    pub spectrum: SpectrumDiagnostics,
    pub states: StateDiagnostics,
    pub protocols: Vec<ProtocolReport>,
}

impl ExperimentReport {
    pub fn protocol(&self, p: Protocol) -> Option<&ProtocolReport> {
        self.protocols.iter().find(|r| r.protocol == p)
    }

    /// Every numeric field is finite.
    pub fn is_finite(&self) -> bool {
        let s = &self.spectrum;
        let st = &self.states;
        let mut ok = s.mean_level_spacing_ratio.is_none_or(f64::is_finite);
        ok &= [s.e_min, s.e_max, s.degeneracy_tol, st.e1, st.e2, st.max_overlap, st.overlap_sum]
            .iter()
            .all(|x| x.is_finite());
        ok &= st.cat_q_variance_closed_form.is_none_or(f64::is_finite);
        for p in &self.protocols {
            for o in &p.observables {
                ok &= [o.theory_mean, o.theory_sigma, o.numeric_mean, o.numeric_mean_ci, o.numeric_sigma, o.numeric_sigma_ci]
                    .iter()
                    .all(|x| x.is_finite());
            }
            if let Some(mc) = &p.monte_carlo {
                ok &= mc.means.iter().chain(&mc.second_moments).all(|e| e.value.is_finite() && e.std_error.is_finite());
            }
        }
        ok
    }
}

/// Everything downstream of diagonalization, in the eigenbasis of `H`.
pub struct PreparedSystem {
    pub basis: SpinBasis,
    pub disorder: DisorderRealization,
    pub eig: EigenSystem,
    pub partition: SectorPartition,
    pub spectrum: SpectrumDiagnostics,
    /// `Φ1`, `Φ2` in the spin basis.
    pub phi1: CVector,
    pub phi2: CVector,
    /// `<i|Φ1>`, `<i|Φ2>`.
    pub phi1_eig: CVector,
    pub phi2_eig: CVector,
    pub e1: f64,
    pub e2: f64,
    pub h_r: HermitianOperator,
    pub q: HermitianOperator,
}

impl PreparedSystem {
    pub fn observables(&self) -> [&HermitianOperator; 2] {
        [&self.h_r, &self.q]
    }
}

fn spectrum_from_energies(energies: &[f64], tol_override: Option<f64>) -> Result<(SpectrumDiagnostics, SectorPartition)> {
    let tol = tol_override.unwrap_or_else(|| default_degeneracy_tol(energies));
    let partition = cluster_sectors(energies, tol);
    let r = if energies.len() >= 3 { Some(level_spacing_ratio(energies)?.mean_ratio) } else { None };
    let diag = SpectrumDiagnostics {
        dim: energies.len(),
        mean_level_spacing_ratio: r,
        e_min: energies.first().copied().unwrap_or(0.0),
        e_max: energies.last().copied().unwrap_or(0.0),
        degeneracy_tol: tol,
        n_sectors: partition.len(),
    };
    Ok((diag, partition))
}

/// Build the chain, diagonalize, select `Φ1`, `Φ2` and rotate everything into the eigenbasis.
pub fn prepare_system(config: &ExperimentConfig) -> Result<PreparedSystem> {
    config.validate()?;
    let l = config.sites;
    let basis = build_basis(l, config.total_sz).stage("basis")?;
    let disorder = DisorderRealization::sample(l, config.h, config.disorder_seed).stage("disorder")?;
    let h = build_hamiltonian(&basis, config.coupling, &disorder, &ChainTerms::full(l)).stage("hamiltonian")?;
    let h_r = build_hamiltonian(&basis, config.coupling, &disorder, &ChainTerms::right(l)?).stage("hamiltonian")?;
    let eig = diagonalize(&h).stage("diagonalize")?;
    let (spectrum, partition) = spectrum_from_energies(&eig.energies, config.degeneracy_tol).stage("spectrum")?;

    let left = half_chain_spectrum(config.coupling, &disorder, 0..l / 2).stage("half-chain spectra")?;
    let right = half_chain_spectrum(config.coupling, &disorder, l / 2..l).stage("half-chain spectra")?;
    let bounds = config.state_targets.map_or((spectrum.e_min, spectrum.e_max), |[a, b]| (a, b));
    let low = find_product_eigenstates(&left, &right, &basis, EdgeTarget::NearMin, bounds).stage("state selection")?;
    let high = find_product_eigenstates(&left, &right, &basis, EdgeTarget::NearMax, bounds).stage("state selection")?;

    let vd = eig.vectors.adjoint();
    let phi1_eig = &vd * &low.vector;
    let phi2_eig = &vd * &high.vector;
    let h_r = h_r.in_basis(&eig.vectors);
    let q = build_projector_observable(&phi1_eig, &phi2_eig).stage("rotation")?;

    Ok(PreparedSystem {
        basis,
        disorder,
        eig,
        partition,
        spectrum,
        phi1: low.vector,
        phi2: high.vector,
        phi1_eig,
        phi2_eig,
        e1: low.energy,
        e2: high.energy,
        h_r,
        q,
    })
}

/// Spectrum diagnostics only (eigenvalues, no eigenvectors).
pub fn spectrum_diagnostics(config: &ExperimentConfig) -> Result<SpectrumDiagnostics> {
    config.validate()?;
    let l = config.sites;
    let basis = build_basis(l, config.total_sz).stage("basis")?;
    let disorder = DisorderRealization::sample(l, config.h, config.disorder_seed).stage("disorder")?;
    let h = build_hamiltonian(&basis, config.coupling, &disorder, &ChainTerms::full(l)).stage("hamiltonian")?;
    let energies = eigenvalues(&h).stage("diagonalize")?;
    Ok(spectrum_from_energies(&energies, config.degeneracy_tol).stage("spectrum")?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelStatistics {
    pub seeds: Vec<u64>,
    pub per_seed: Vec<f64>,
    pub mean: f64,
    pub std_error: f64,
}

/// Disorder-averaged mean spacing ratio over seeds `seed, seed+1, …`.
pub fn level_statistics(config: &ExperimentConfig, realizations: usize) -> Result<LevelStatistics> {
    if realizations == 0 {
        return Err(Error::InvalidArgument("need at least one realization".into()));
    }
    if config.sites < 4 {
        return Err(Error::InvalidArgument("level statistics need L >= 4".into()));
    }
    let seeds: Vec<u64> = (0..realizations as u64).map(|k| config.disorder_seed + k).collect();
    let per_seed = seeds
        .par_iter()
        .map(|&s| spectrum_diagnostics(&config.with_seed(s)).and_then(|d| spacing_or_err(&d)))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(seeds, per_seed))
}

fn spacing_or_err(d: &SpectrumDiagnostics) -> Result<f64> {
    d.mean_level_spacing_ratio
        .ok_or_else(|| Error::InvalidArgument(format!("level statistics need >= 3 levels, sector has {}", d.dim)))
}

fn summarize(seeds: Vec<u64>, per_seed: Vec<f64>) -> LevelStatistics {
    let n = per_seed.len() as f64;
    let mean = per_seed.iter().sum::<f64>() / n;
    let var = if per_seed.len() > 1 { per_seed.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    LevelStatistics { seeds, per_seed, mean, std_error: (var / n).sqrt() }
}

/// Series and report rows for one protocol.
pub struct ProtocolRun {
    pub report: ProtocolReport,
    pub series: Vec<(String, TimeSeries)>,
}

pub fn run_protocol(system: &PreparedSystem, config: &ExperimentConfig, protocol: Protocol) -> Result<ProtocolRun> {
    let rho = prepare_protocol_state(&system.phi1_eig, &system.phi2_eig, protocol).stage("state preparation")?;
    let options = EvolveOptions { prune_floor: config.prune_floor };
    let mut observables = Vec::new();
    let mut series = Vec::new();
    for (name, op) in OBSERVABLES.iter().zip(system.observables()) {
        let theory = second_moment_expectation(&rho, &system.partition, op, op).stage("theory")?;
        let s = evolve_expectation(&rho, op, &system.eig.energies, &config.time_window, options).stage("dynamics")?;
        let st = time_stats(&s, config.n_subintervals).stage("time statistics")?;
        observables.push(ObservableReport {
            name: name.to_string(),
            theory_mean: theory.mean_a,
            theory_sigma: theory.sigma(),
            numeric_mean: st.mean,
            numeric_mean_ci: st.mean_ci,
            numeric_sigma: st.sigma,
            numeric_sigma_ci: st.sigma_ci,
        });
        series.push((name.to_string(), s));
    }
    let monte_carlo = if config.mc_samples > 0 {
        let ops: Vec<HermitianOperator> = system.observables().into_iter().cloned().collect();
        let seed = config.disorder_seed;
        let means = estimate_moments(&rho, &system.partition, &ops, 1, config.mc_samples, seed).stage("oracle")?;
        let second = estimate_moments(&rho, &system.partition, &ops, 2, config.mc_samples, seed).stage("oracle")?;
        Some(MonteCarloReport { n_samples: config.mc_samples, means, second_moments: second })
    } else {
        None
    };
    Ok(ProtocolRun { report: ProtocolReport { protocol, observables, monte_carlo }, series })
}

fn state_diagnostics(system: &PreparedSystem) -> Result<StateDiagnostics> {
    let o: OverlapDiagnostics = overlap_diagnostics(&system.phi1_eig, &system.phi2_eig)?;
    let applicable = o.closed_form_applicable(CLOSED_FORM_OVERLAP_THRESHOLD);
    let closed = if applicable { Some(cat_q_variance_closed_form(&system.phi1_eig, &system.phi2_eig)?) } else { None };
    Ok(StateDiagnostics {
        e1: system.e1,
        e2: system.e2,
        max_overlap: o.max,
        overlap_sum: o.sum,
        closed_form_applicable: applicable,
        cat_q_variance_closed_form: closed,
    })
}

/// Full pipeline in memory; nothing is written.
pub fn run_in_memory(config: &ExperimentConfig) -> Result<(ExperimentReport, PreparedSystem, Vec<ProtocolRun>)> {
    let system = prepare_system(config)?;
    let states = state_diagnostics(&system).stage("overlap diagnostics")?;
    let runs = config
        .protocol
        .protocols()
        .into_iter()
        .map(|p| run_protocol(&system, config, p))
        .collect::<Result<Vec<_>>>()?;
    let report = ExperimentReport {
        config: config.clone(),
        generated_unix_secs: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        spectrum: system.spectrum.clone(),
        states,
        protocols: runs.iter().map(|r| r.report.clone()).collect(),
    };
    if !report.is_finite() {
        return Err(Error::NumericalIntegrity("report contains non-finite values".into()));
    }
    Ok((report, system, runs))
}

/// Resolve the output directory: explicit argument, then environment, then config, then `./output`.
pub fn resolve_output_dir(config: &ExperimentConfig, explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    config.output_dir.clone().unwrap_or_else(|| PathBuf::from("output"))
}

/// Tracks written files so a failed run leaves nothing behind.
struct OutputSink {
    dir: PathBuf,
    created_dir: bool,
    written: Vec<PathBuf>,
}

impl OutputSink {
    fn open(dir: &Path) -> Result<Self> {
        let created_dir = !dir.exists();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), created_dir, written: Vec::new() })
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        self.written.push(path.clone());
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        body(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))
    }

    fn discard(self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
        if self.created_dir {
            let _ = fs::remove_dir(&self.dir);
        }
    }
}

fn write_outputs(sink: &mut OutputSink, report: &ExperimentReport, system: &PreparedSystem, runs: &[ProtocolRun]) -> Result<()> {
    let json = serde_json::to_string_pretty(report)?;
    for run in runs {
        for (name, s) in &run.series {
            sink.write(&format!("series_{}_{}.csv", run.report.protocol.name(), name), |w| s.write_csv(w))?;
        }
    }
    sink.write("spectrum.csv", |w| {
        writeln!(w, "index,energy")?;
        for (k, e) in system.eig.energies.iter().enumerate() {
            writeln!(w, "{k},{e}")?;
        }
        Ok(())
    })?;
    sink.write("overlaps.csv", |w| {
        writeln!(w, "index,energy,phi1_re,phi1_im,phi2_re,phi2_im,overlap")?;
        for (k, e) in system.eig.energies.iter().enumerate() {
            let (a, b) = (system.phi1_eig[k], system.phi2_eig[k]);
            writeln!(w, "{k},{e},{},{},{},{},{}", a.re, a.im, b.re, b.im, (a * b).norm())?;
        }
        Ok(())
    })?;
    sink.write("report.json", |w| writeln!(w, "{json}"))?;
    Ok(())
}

/// Run the pipeline and write `report.json`, the series CSVs, `spectrum.csv`
/// and `overlaps.csv` into `out_dir`. On failure every file written so far is removed.
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport> {
    let (report, system, runs) = run_in_memory(config)?;
    let mut sink = OutputSink::open(out_dir).stage("output")?;
    match write_outputs(&mut sink, &report, &system, &runs).stage("output") {
        Ok(()) => Ok(report),
        Err(e) => {
            sink.discard();
            Err(e)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub level_statistics: LevelStatistics,
    pub reports: Vec<PathBuf>,
}

/// Independent runs for seeds `seed, seed+1, …`, each in `out_dir/seed_<s>`,
/// plus `aggregate.json` with the disorder-averaged spacing ratio.
pub fn run_batch(config: &ExperimentConfig, realizations: usize, out_dir: &Path) -> Result<BatchSummary> {
    if realizations == 0 {
        return Err(Error::InvalidArgument("need at least one realization".into()));
    }
    if config.sites < 4 {
        return Err(Error::InvalidArgument("level statistics need L >= 4".into()));
    }
    let seeds: Vec<u64> = (0..realizations as u64).map(|k| config.disorder_seed + k).collect();
    let results = seeds
        .par_iter()
        .map(|&s| {
            let dir = out_dir.join(format!("seed_{s}"));
            let cfg = ExperimentConfig { output_dir: Some(dir.clone()), ..config.with_seed(s) };
            run_experiment(&cfg, &dir).and_then(|r| Ok((spacing_or_err(&r.spectrum)?, dir.join("report.json"))))
        })
        .collect::<Result<Vec<_>>>()?;
    let (per_seed, reports): (Vec<f64>, Vec<PathBuf>) = results.into_iter().unzip();
    let summary = BatchSummary { level_statistics: summarize(seeds, per_seed), reports };
    let path = out_dir.join("aggregate.json");
    let json = serde_json::to_string_pretty(&summary)?;
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e)).stage("output")?;
    Ok(summary)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub indices: Vec<usize>,
    pub estimate: f64,
    pub std_error: f64,
    /// Analytic value for orders 1 and 2.
    pub analytic: Option<f64>,
    /// `(estimate - analytic) / std_error`.
    pub z_score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub observables: Vec<String>,
    pub order: usize,
    pub n_samples: usize,
    pub protocols: Vec<(Protocol, Vec<OracleComparison>)>,
}

/// Monte-Carlo moments of `H_R` and `Q` under the commutant ensemble,
/// compared with the analytic mean and second moment where available.
pub fn oracle_check(config: &ExperimentConfig, order: usize, n_samples: usize) -> Result<OracleReport> {
    let system = prepare_system(config)?;
    let ops: Vec<HermitianOperator> = system.observables().into_iter().cloned().collect();
    let mut protocols = Vec::new();
    for p in config.protocol.protocols() {
        let rho = prepare_protocol_state(&system.phi1_eig, &system.phi2_eig, p).stage("state preparation")?;
        let est = estimate_moments(&rho, &system.partition, &ops, order, n_samples, config.disorder_seed).stage("oracle")?;
        let mut rows = Vec::new();
        for e in est {
            let analytic = match e.indices.as_slice() {
                [a] => Some(second_moment_expectation(&rho, &system.partition, &ops[*a], &ops[*a]).stage("theory")?.mean_a),
                [a, b] => Some(second_moment_expectation(&rho, &system.partition, &ops[*a], &ops[*b]).stage("theory")?.second_moment),
                _ => None,
            };
            let z_score = analytic.and_then(|v| (e.std_error > 0.0).then(|| (e.value - v) / e.std_error));
            rows.push(OracleComparison { indices: e.indices, estimate: e.value, std_error: e.std_error, analytic, z_score });
        }
        protocols.push((p, rows));
    }
    Ok(OracleReport { observables: OBSERVABLES.iter().map(|s| s.to_string()).collect(), order, n_samples, protocols })
}
