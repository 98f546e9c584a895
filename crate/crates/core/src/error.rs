use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{what} is singular (condition estimate {condition:.3e})")]
    Singular { what: String, condition: f64 },

    #[error("matrix is not Hermitian (max asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("SINR target of user {user} is unreachable at the current partition")]
    SinrUnreachable { user: usize },

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("partition must be binary for echo synthesis (entry {index} = {value})")]
    NonBinaryPartition { index: usize, value: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
