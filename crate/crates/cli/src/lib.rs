//! Batch front end: load a run config, dispatch one command, and write CSV
//! artifacts stamped with the hash of the config that produced them.

pub mod config;
pub mod run;

pub use config::{config_from_overrides, load_config_file, parse_config, parse_config_in, Command, ConfigError, Overrides, RunConfig};
pub use run::{manifest_hash, run, Artifact, RunError, RunOutput};
