use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid genetic map: {0}")]
    InvalidMap(String),

    #[error("invalid genotype: {0}")]
    InvalidGenotype(String),

    /// Dimensions of genotypes, frequencies and map disagree.
    #[error("structural mismatch: {0}")]
    Structural(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("refusing to run: {0}")]
    TooLarge(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("invalid comparison: {0}")]
    InvalidComparison(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
