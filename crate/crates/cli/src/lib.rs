//! Configuration, presets and the experiment runner behind the `surfns` binary.

pub mod config;
pub mod expr;
pub mod output;
pub mod runner;

pub use config::{parse_config, preset, Command, RunConfig, PRESETS};
pub use runner::{run, RunOutcome};
