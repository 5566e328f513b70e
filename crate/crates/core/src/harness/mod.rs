//! Experiment driver: datasets, training runs, evaluation, statistics,
//! n-traces and grid reports.

pub mod dataset;
pub mod eval;
pub mod report;
pub mod stats;
pub mod trace;
pub mod train;

pub use dataset::{generate_dataset, DatasetSpec};
pub use eval::{evaluate_policy, EvalMetrics, EvalSettings};
pub use stats::{dead_end_stats, paired_t_test_greater, DeadEndStats};
pub use trace::{n_trace, stable_turn};
pub use train::{train_run, EpochRecord, RunResult};
