use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdError {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("tensor data length {len} does not match shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("degenerate embedding: row {row} of {side} has norm {norm:e}")]
    DegenerateEmbedding {
        side: &'static str,
        row: usize,
        norm: f64,
    },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("{op}: {msg}")]
    Domain { op: &'static str, msg: String },
}

pub type Result<T> = std::result::Result<T, AdError>;
