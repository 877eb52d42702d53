//! IO companion to `driftbench-core`: CSV dataset ingestion, TOML run
//! configuration with key-path overrides, results-file handling, and the
//! command implementations behind the `driftbench` binary.

pub mod commands;
pub mod config;
pub mod dataio;
pub mod results;
