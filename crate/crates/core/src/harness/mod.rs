//! Fidelity evaluators, decoding experiments, randomizer statistics and
//! the command-line interface.

pub mod cli;
pub mod experiment;
pub mod fidelity;
pub mod stats;

pub use experiment::{run_decoding_experiment, ExperimentConfig, ExperimentSummary, PartialConfig, TrialRecord};
pub use fidelity::{fidelity_bound, fidelity_formula, fidelity_post_randomizer, success_floor, FormulaEvaluator};
pub use stats::{randomizer_statistics, StatisticsRecord, StatsConfig};
