//! Experiment configuration, closed-loop simulation and result output.

mod config;
mod experiment;
mod output;
mod sim;

pub use config::{BankId, ExperimentConfig, GovernorKind, GovernorSection, ManeuverSection, NoiseSpec, PlantSection};
pub use experiment::{noise_rng, roll_noise, Baselines, RunOutcome, RunPoint, Setup, StatsRow, SweepOutput, RNG_NAME};
pub use output::{
    config_hash, metrics_rows, read_metrics, write_baselines, write_decisions, write_manifest, write_metrics,
    write_stats, write_sweep, write_traces, MetricsRow, BASELINES_FILE, DECISIONS_FILE, MANIFEST_FILE, METRICS_FILE,
    STATS_FILE, TRACES_FILE,
};
pub use sim::{inject_noise, simulate, SimResult, StepRecord};
