//! Configuration loading, output writing and report summaries behind the
//! `polybgk` binary.

pub mod config;
pub mod output;
pub mod report;

pub use config::{load_config, parse_config, ConfigError, Overrides};
pub use output::{exit_code, write_outputs};
