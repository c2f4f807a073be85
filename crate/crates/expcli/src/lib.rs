//! Experiment orchestration for particle-based online EM: configuration,
//! data, replicated runs, traces, summaries and the cost benchmark.

pub mod benchmark;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod summarize;
pub mod trace;

pub use benchmark::{match_budget, run_benchmark, BenchmarkConfig, BenchmarkReport, BudgetConfig, BudgetMatch};
pub use config::{DataSource, ExperimentConfig, ModelId};
pub use error::{ExpError, FieldError, Result};
pub use experiment::{run_experiment, ExperimentReport, ReplicateStatus, RunOptions};
pub use summarize::{summarize_traces, TailSummary};
