//! Pipeline driver behind the `oamdm` binary.
//!
//! - [`config`]: the TOML experiment config and its validation.
//! - [`measure`]: state preparation, weak measurement, counting, reconstruction and fits.
//! - [`characterize`]: sorter crosstalk and mask export.
//! - [`analyze`]: re-fitting stored reconstructions by model name.
//! - [`plot`]: long-format plot tables from a measurement bundle.
//! - [`bundle`]: output directories and their SHA-256 manifests.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 numerical failure,
//! 4 I/O error or missing input.

pub mod analyze;
pub mod app;
pub mod bundle;
pub mod characterize;
pub mod config;
pub mod error;
pub mod measure;
pub mod plot;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
