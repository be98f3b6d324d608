//! Config parsing, report formatting and scenario execution for the
//! `codednet` binary.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{ConfigError, RunMode, ScenarioConfig, TopologySelect};
pub use output::{emit_analytic, emit_metrics, emit_suite, Format};
