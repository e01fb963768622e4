use std::io;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("{malformed} of {total} rows malformed, above the {tolerance} tolerance (first: {first})")]
    TooManyMalformed {
        malformed: usize,
        total: usize,
        tolerance: f64,
        first: String,
    },

    #[error("dataset name `{0}` has fewer than 5 dot-separated fields")]
    DatasetName(String),

    #[error("unknown computing site `{0}`")]
    UnknownSite(String),

    #[error("invalid site catalog: {0}")]
    Catalog(String),

    #[error("feature `{0}` is constant")]
    DegenerateFeature(String),

    #[error("unknown category `{value}` for feature `{feature}`")]
    UnknownCategory { feature: String, value: String },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("training diverged at step {step}: {detail}")]
    Diverged { step: usize, detail: String },

    #[error("bad checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;
