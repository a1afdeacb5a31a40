use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bounding box ({x}, {y}, {w}, {h}): width and height must be positive and finite")]
    DegenerateBox { x: f64, y: f64, w: f64, h: f64 },

    #[error("mask is empty (no foreground pixels)")]
    EmptyMask,

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    DimensionMismatch {
        expected: (u32, u32),
        actual: (u32, u32),
    },

    #[error("every candidate mask was classified as background")]
    AllBackground,

    #[error("no candidate mask survived cleaning")]
    EmptyAfterCleaning,

    #[error("{0} pool is empty")]
    EmptyPool(&'static str),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error("unknown category id {category_id} referenced by {context}")]
    UnknownCategory { category_id: u32, context: String },

    #[error("unknown subset tag `{0}`")]
    UnknownTag(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, err: &serde_json::Error) -> Self {
        Error::Parse {
            path: path.into(),
            line: err.line(),
            column: err.column(),
            message: err.to_string(),
        }
    }

    /// True for errors caused by bad input (as opposed to runtime failures).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DegenerateBox { .. }
                | Error::Config(_)
                | Error::Dataset(_)
                | Error::UnknownCategory { .. }
                | Error::UnknownTag(_)
                | Error::Parse { .. }
                | Error::DimensionMismatch { .. }
        )
    }
}
