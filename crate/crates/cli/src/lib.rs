//! Stage implementations behind the `radsim` binary: `ingest`, `label`,
//! `score` and `report`, all driven by one TOML run configuration.

pub mod config;
mod stages;

use std::fmt;

pub use config::{ChatKind, EmbedderKind, Overrides, RunConfig};
pub use stages::{
    chat_provider, cmd_ingest, cmd_label, cmd_report, cmd_score, embedding_provider,
    Identification, LabelSummary, Manifest, ManifestCounts, PipelineRecord, ReportSummary,
    ScoreSummary,
};

pub const EXIT_FAILURE: i32 = 1;
/// Bad configuration or unreadable/invalid input files.
pub const EXIT_INPUT: i32 = 2;
/// An earlier stage's output is missing or stale.
pub const EXIT_PREREQUISITE: i32 = 3;
/// Inputs are valid but leave nothing meaningful to compute.
pub const EXIT_DEGENERATE: i32 = 4;
/// At least one report could not be labeled after retries.
pub const EXIT_LABEL_FAILURES: i32 = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new(EXIT_INPUT, message)
    }

    pub fn prerequisite(message: impl Into<String>) -> Self {
        Self::new(EXIT_PREREQUISITE, message)
    }

    pub fn degenerate(message: impl Into<String>) -> Self {
        Self::new(EXIT_DEGENERATE, message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(EXIT_FAILURE, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

/// Loads, overrides and validates the configuration.
pub fn load_config(path: &std::path::Path, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(path)?;
    cfg.apply(overrides);
    cfg.validate()?;
    Ok(cfg)
}
