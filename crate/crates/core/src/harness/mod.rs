//! Experiment driver behind the `qsp` binary.

pub mod config;
pub mod output;
pub mod presets;
pub mod run;
pub mod sweep;
pub mod validate;
