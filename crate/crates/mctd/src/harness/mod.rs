//! Benchmark harness: experiment configs, baseline optimizers, trace
//! persistence, and multi-seed reporting.

pub mod baselines;
pub mod config;
pub mod runner;
pub mod summarize;

pub use baselines::{nelder_mead_run, random_search_run, turbo_baseline_run};
pub use config::RunConfig;
pub use runner::{run_experiment, run_seed, Manifest, RunTrace};
pub use summarize::{compare_dirs, summarize, summarize_dir, SummaryTable};
