use thiserror::Error;

/// Errors produced anywhere in the estimation and simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("dataset `{study_id}` has {distinct} distinct dose(s); at least 2 are required")]
    InsufficientDoses { study_id: String, distinct: usize },

    #[error("MTD undefined: {0}")]
    UndefinedMtd(String),

    #[error("improper posterior: {0}")]
    ImproperPosterior(String),

    #[error("study index {index} out of range for {k} studies")]
    IndexOutOfRange { index: usize, k: usize },

    #[error("no studies left after filtering with threshold {threshold}")]
    EmptySelection { threshold: f64 },

    #[error("group `{0}` not found")]
    UnknownGroup(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line front end: 2 for input and
    /// validation problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UndefinedMtd(_) | Error::ImproperPosterior(_) | Error::Numerical(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
