//! Batch experiment runner for `nelson-fk`.
//!
//! A run is described by one JSON document ([`RunConfig`]); the runner
//! validates it, executes the experiment on a private worker pool and writes
//! `result.json`, CSV tables, the basis legend and `manifest.json`.
//!
//! Exit codes: `0` pass, `2` numerical test failed, `1` usage or cap error.

pub mod config;
pub mod describe;
pub mod error;
pub mod runner;

pub use config::{Experiment, RunConfig};
pub use describe::describe;
pub use error::CliError;
pub use runner::{run, Outcome, Status};
