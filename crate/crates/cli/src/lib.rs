//! Configuration-driven front end: `contmeas <mode> --config <path>`.
//!
//! The library half exists so the configuration parser and the runners can
//! be tested without spawning the binary.

pub mod config;
pub mod run;

pub use config::{parse_config, parse_config_with, ConfigError, Mode, Overrides, SimConfig};
pub use run::{output_path, run, RunError, RunReport, OUTPUT_DIR_ENV};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_FLAGGED: i32 = 2;
