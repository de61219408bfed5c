//! Experiment orchestration: configs, seeded parallel runs, records and
//! summaries.
//!
//! Run `i` of an experiment with master seed `s` draws every random quantity
//! from streams keyed by `(s, i)` (see [`crate::rng`]), so records do not
//! depend on the worker count.

pub mod config;
pub mod lil;
pub mod record;
pub mod runner;

pub use config::{keys_help, ExperimentConfig, ExperimentKind};
pub use lil::{lil_statistic_report, write_lil, LilRow};
pub use record::{read_records, summarize, write_summary, RunRecord, SummaryRow};
pub use runner::{run_experiment, run_plan, Plan, RunOutput};
