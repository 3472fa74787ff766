//! Configuration-driven runner for the experiments in `mpfc-core`.
//!
//! A run is described by a flat `key = value` file (see [`config`]), writes
//! CSV tables and binary snapshots (see [`output`]) and ends with a list of
//! pass/fail checks whose conjunction is the process exit status.

pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::{parse_config, Experiment, RunConfig, Tolerances};
pub use error::{ConfigError, LabError};
pub use output::{write_timeseries, LogRow, RunLog, Snapshot};
pub use run::{run, Check, RunOutcome};
