//! Batch experiments for the multimodal planner: configuration, closed-loop
//! trials, Monte Carlo drivers and result files.

pub mod config;
pub mod experiments;
pub mod output;
pub mod sim;

pub use config::{ExperimentConfig, ExperimentKind, Variant};
pub use experiments::{run_antipodal, run_experiment, run_heatmap, run_mode_sweep, run_single, ExperimentResults, TrialRecord};
pub use output::{emit_results, preflight};
pub use sim::{run_trial, Outcome, TrialResult, TrialSettings};
