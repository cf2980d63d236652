//! Closed-loop day simulation: scenario bundles, the run engine, per-step
//! records, tracking metrics, and bundled synthetic scenarios.

mod engine;
mod metrics;
mod record;
mod scenario;
pub mod synth;

pub use engine::{
    run_chain, run_day, run_day_from, CounterfactualEvcs, RunMode, RunOptions, RunStats,
};
pub use metrics::{compute_metrics, compute_metrics_with_plan, Metrics};
pub use record::{BessRecord, EvRecord, Event, RunRecord, SolverRecord, StepRecord};
pub use scenario::{
    load_scenario, read_plan_csv, write_plan_csv, write_scenario_bundle, ChainFile, ControlSpec,
    EvcsSpec, LoadSpec, NoiseSpec, Roster, Scenario, ScenarioFile, SessionsFile, SCHEMA_VERSION,
};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("cannot read {path}: {detail}")]
    Io { path: PathBuf, detail: String },
    #[error("cannot parse {path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error(transparent)]
    Grid(#[from] crate::grid::GridError),
    #[error(transparent)]
    Resource(#[from] crate::resources::ResourceError),
    #[error(transparent)]
    Forecast(#[from] crate::forecast::ForecastError),
    #[error(transparent)]
    Mpc(#[from] crate::mpc::MpcError),
    #[error("run aborted at step {step}: {cause}")]
    Abort { step: usize, cause: String },
}
