use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CaveError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CaveError {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("format error: {0}")]
    Format(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("series has no frames")]
    EmptySeries,
    #[error("index ({row}, {col}) out of bounds for {height}x{width} image")]
    Index {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
}

impl CaveError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CaveError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        CaveError::Image {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input or configuration rather than a
    /// failure while doing the work.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            CaveError::Format(_)
                | CaveError::Validation(_)
                | CaveError::EmptySeries
                | CaveError::Index { .. }
                | CaveError::Shape(_)
                | CaveError::Config(_)
                | CaveError::Json(_)
        )
    }
}
