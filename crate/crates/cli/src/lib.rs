//! Stage-wise experiment runner: dataset, synthesizers, pools, classifiers,
//! evaluation and the ablation report, all tracked in a checksummed manifest.

pub mod config;
pub mod error;
pub mod manifest;
pub mod report;
pub mod stages;

pub use config::{ExperimentConfig, Generator, Variant};
pub use error::{CliError, CliResult};
pub use manifest::Manifest;
pub use report::Report;
pub use stages::Workspace;
