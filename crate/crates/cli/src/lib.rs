//! Experiment harness for `sbmlab-core`: configuration files, parallel
//! replica execution with per-replica random streams, reports and merging.

pub mod config;
pub mod experiments;
pub mod report;
pub mod runner;

pub use config::{load_config, parse_config, ConfigError, ExperimentConfig, Kind};
pub use report::{RunReport, Status};
pub use runner::{compute_report, merge_reports, run_experiment};

/// Process exit codes of the `sbmlab` binary.
pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const VALIDATION: i32 = 2;
    pub const DEGRADED: i32 = 3;
    pub const CHECK_FAILED: i32 = 4;
}
