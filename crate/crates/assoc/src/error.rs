use thiserror::Error;

#[derive(Debug, Error)]
pub enum AssocError {
    #[error("PCA needs rank {needed}, data has rank {achieved}")]
    RankDeficient { needed: usize, achieved: usize },
    #[error("singular design matrix: {0} (drop collinear covariate columns)")]
    SingularDesign(String),
    #[error("non-positive residual degrees of freedom ({0})")]
    DegreesOfFreedom(i64),
    #[error("all values are equal; ranks are undefined")]
    ConstantInput,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Genetics(#[from] contig_genetics::GeneticsError),
}

pub type Result<T> = std::result::Result<T, AssocError>;
