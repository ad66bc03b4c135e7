//! Oracles, spread diagnostics, the experiment runner, metrics export, and
//! the self-check suite.

mod degeneration;
mod experiment;
mod metrics;
mod oracle;
pub mod verify;

pub use degeneration::{
    degeneration_metrics, population_std, probe_grid, DegenerationReport, ProbeReport, TrueChainQuantiles,
    PROBE_STATES,
};
pub use experiment::{evaluate, run_experiment, train_seed, EvalSummary, ExperimentConfig, SeedRun, SeedSummary, Task};
pub use metrics::{csv_header, export, read_json_lines, ExportFormat, MetricsLog, MetricsRecord};
pub use oracle::{
    dro_robust_minimizer_bruteforce, dro_worst_case_loss, empirical_quantile_slot, DroOracleConfig,
    EmpiricalTargetLaw,
};
