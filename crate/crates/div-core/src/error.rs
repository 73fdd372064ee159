//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DivError {
    /// Invalid model or training configuration (bad layer dims, wrong head kind, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Matrix dimensions do not line up.
    #[error("shape error: {0}")]
    Shape(String),

    /// Invalid input data (non-finite values, empty samples, out-of-range arguments).
    #[error("input error: {0}")]
    Input(String),

    /// A numerical failure during training or evaluation (non-finite loss, overflow).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Second-stage design is rank deficient; classical IV estimates are not well-defined.
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("serialization error: {0}")]
    Serialization(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<ndarray::ShapeError> for DivError {
    fn from(e: ndarray::ShapeError) -> Self {
        DivError::Shape(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, DivError>;
