use contig_assoc::AssocError;
use contig_core::CoreError;
use contig_genetics::GeneticsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("stale artifact: {0}")]
    Stale(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Genetics(#[from] GeneticsError),
    #[error(transparent)]
    Assoc(#[from] AssocError),
}

impl CliError {
    /// 2 config, 3 data (including missing or stale inputs), 4 numerical.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Stale(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Core(e) => match e {
                CoreError::Config(_) | CoreError::UnknownStrategy { .. } => 2,
                CoreError::Genetics(GeneticsError::Config(_)) => 2,
                e if e.is_numerical() => 4,
                _ => 3,
            },
            CliError::Genetics(GeneticsError::Config(_)) => 2,
            CliError::Genetics(_) => 3,
            CliError::Assoc(e) => match e {
                AssocError::Genetics(GeneticsError::Config(_)) => 2,
                AssocError::SingularDesign(_) | AssocError::RankDeficient { .. } => 4,
                _ => 3,
            },
        }
    }
}

impl CliError {
    /// The message with its category, for library errors that carry none.
    pub fn describe(&self) -> String {
        match self {
            CliError::Core(_) | CliError::Genetics(_) | CliError::Assoc(_) => {
                let kind = match self.exit_code() {
                    2 => "config error",
                    4 => "numerical failure",
                    _ => "data error",
                };
                format!("{kind}: {self}")
            }
            _ => self.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
