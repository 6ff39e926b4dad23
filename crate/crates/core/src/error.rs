use std::path::PathBuf;

use crate::env::Side;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),

    #[error("location {x} outside path domain [{lo}, {hi}]")]
    Domain { x: f64, lo: f64, hi: f64 },

    #[error("growth limit reached on {side:?} wing at width {width}")]
    GrowthLimit { side: Side, width: f64 },

    #[error("decomposition incomplete on {0:?} wing")]
    Incomplete(Side),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("bad data: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors that mean "the sampled environment was not wide enough";
    /// experiments discard such replicates instead of aborting.
    pub fn is_growth(&self) -> bool {
        matches!(self, Error::GrowthLimit { .. } | Error::Incomplete(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
