//! Experiment runners for the `largen` laboratory.
//!
//! Each runner resolves its parameters from a [`Config`], writes a
//! [`manifest::RunManifest`] before producing anything else, emits CSV/JSON
//! outputs, and returns a [`Report`] with named pass/fail checks.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments, clippy::manual_is_multiple_of)]

pub mod config;
pub mod experiments;
pub mod manifest;
pub mod output;

pub use config::{Config, ConfigError};

use std::path::PathBuf;

use serde::Serialize;

/// One acceptance check evaluated on a run's results.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub experiment: String,
    pub out_dir: PathBuf,
    pub outputs: Vec<PathBuf>,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Errors a run can end with: bad configuration, or failure while running.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Numerics(#[from] largen::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
