use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeneticsError {
    #[error("empty genotype matrix")]
    Empty,
    #[error("invalid parameter: {0}")]
    Config(String),
    #[error("no overlap between score {score} and genotypes (score SNPs e.g. {score_sample:?}; genotype SNPs e.g. {genotype_sample:?})")]
    NoOverlap {
        score: String,
        score_sample: Vec<String>,
        genotype_sample: Vec<String>,
    },
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, GeneticsError>;
