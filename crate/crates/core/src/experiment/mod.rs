//! Experiment orchestration: configuration, runs, exports and the regret
//! study.

pub mod config;
pub mod export;
pub mod gradcheck;
pub mod regret;
pub mod run;

pub use config::ExperimentConfig;
pub use regret::{run_regret_experiment, validate_assumption_gap, RegretExperiment};
pub use run::{load_checkpoint, resume_experiment, run_experiment, RunOutcome};
