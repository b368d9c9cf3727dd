use contig_autodiff::AdError;
use contig_genetics::GeneticsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error(transparent)]
    Genetics(#[from] GeneticsError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("batch of {0} rows has no negatives; need at least 2")]
    BatchTooSmall(usize),
    #[error("every loss term was skipped (each modality has fewer than 2 usable rows)")]
    EmptyLoss,
    #[error("loss became {value} at step {step} (epoch {epoch}, lr {lr:e}); batch: {}", batch_ids.join(","))]
    NonFiniteLoss {
        value: f64,
        step: usize,
        epoch: usize,
        lr: f64,
        batch_ids: Vec<String>,
    },
    #[error("unknown {kind} {name:?}; known: {}", known.join(", "))]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        known: Vec<String>,
    },
    #[error("reference fingerprint mismatch: {expected} vs {found}")]
    FingerprintMismatch { expected: String, found: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CoreError {
    /// Errors caused by arithmetic rather than by inputs or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            CoreError::NonFiniteLoss { .. } | CoreError::Ad(AdError::DegenerateEmbedding { .. })
        )
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
