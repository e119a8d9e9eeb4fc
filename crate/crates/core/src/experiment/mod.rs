//! Config-driven orchestration of the cut-and-rejoin quench experiment.

mod config;
mod run;
mod states;

pub use config::{ExperimentConfig, Protocol, ProtocolChoice, MAX_SITES};
pub use run::{
    level_statistics, oracle_check, prepare_system, resolve_output_dir, run_batch, run_experiment, run_in_memory,
    run_protocol, spectrum_diagnostics, BatchSummary, ExperimentReport, LevelStatistics, MonteCarloReport,
    ObservableReport, OracleComparison, OracleReport, PreparedSystem, ProtocolReport, ProtocolRun,
    SpectrumDiagnostics, StateDiagnostics, OBSERVABLES, OUTPUT_DIR_ENV,
};
pub use states::{
    find_product_eigenstates, half_chain_spectrum, prepare_protocol_state, reduced_density_matrix, EdgeTarget,
    HalfChainSpectrum, HalfSector, ProductState,
};
