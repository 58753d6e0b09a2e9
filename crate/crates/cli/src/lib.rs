//! Driver plumbing for the `apc` binary: run configuration and the render
//! and bench commands.

pub mod config;
pub mod run;

pub use config::{Algorithm, RunConfig, CONFIG_HEADER};
pub use run::{cmd_bench, cmd_render, parse_sweep, BenchOutcome, RenderOutcome};
