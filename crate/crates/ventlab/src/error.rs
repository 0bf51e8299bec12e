//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A physical or model parameter is outside its valid range.
    #[error("parameter error: {0}")]
    Parameter(String),
    /// A mathematical function was evaluated outside its domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// Off-grid action value or out-of-range action index.
    #[error("codec error: {0}")]
    Codec(String),
    /// An API contract was violated by the caller (shape mismatch, missing flag).
    #[error("contract error: {0}")]
    Contract(String),
    /// Dataset is empty, inconsistent, or has unimputable gaps.
    #[error("data error: {0}")]
    Data(String),
    /// A computation produced a non-finite or otherwise unusable value.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// Invalid run configuration.
    #[error("config error: {0}")]
    Config(String),
    /// An expected artifact is missing or its recorded hash does not match.
    #[error("artifact error: {0}")]
    Artifact(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
