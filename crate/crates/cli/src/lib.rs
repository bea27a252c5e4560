//! Experiment harness: JSON configs in, CSV tables and JSON-lines trial
//! dumps out.

pub mod config;
pub mod harness;

pub use config::{emit_defaults, parse_config, parse_config_str, ExperimentSpec, SolverKind};
