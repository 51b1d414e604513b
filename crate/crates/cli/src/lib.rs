//! Configuration, CSV output and command drivers for the `alm-lqg` tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod report;
pub mod run;
pub mod table;

pub use config::{ConfigError, Overrides, RunConfig, Scenario};
pub use run::{run_compare, run_simulate, run_solve, simulate_parallel, Alternative, RunError};
