//! Configuration files, CSV artifacts and experiment drivers for the
//! `colony` command line tool.

pub mod config;
pub mod output;
pub mod run;

pub use config::{load_config, parse_config, serialize_config, ConfigError, RunConfig};
pub use run::{run_experiment, RunSummary};
