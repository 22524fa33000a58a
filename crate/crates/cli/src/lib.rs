//! Manifest parsing, experiment orchestration and result files for the
//! `vkflow` binary.

pub mod commands;
pub mod error;
pub mod manifest;
pub mod output;

pub use error::{CliError, Result};
pub use manifest::{parse_manifest, Manifest, FORMAT_VERSION};
