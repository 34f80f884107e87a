use thiserror::Error;

/// Errors raised anywhere in the estimation chain.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: column `{0}` not found")]
    MissingColumn(String),

    #[error("parse error: row {row}, column `{column}`: cannot parse `{value}` as a number")]
    Parse { row: usize, column: String, value: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("formula error: {0}")]
    Formula(String),

    #[error("column mismatch: {0}")]
    ColumnMismatch(String),

    #[error("benchmark error: {0}")]
    Benchmark(String),

    #[error("rank-deficient design: collinear columns {columns:?}")]
    RankDeficient { columns: Vec<String> },

    #[error("{what} did not converge after {iterations} iterations (residual norm {residual:.3e})")]
    NoConvergence { what: String, iterations: usize, residual: f64, last_iterate: Vec<f64> },

    #[error("singular matrix in {0}")]
    Singular(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bootstrap failed: {failed} of {total} replicates failed")]
    BootstrapFailures { failed: usize, total: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 2 for unusable input or configuration, 3 when the
    /// estimation itself fails.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::RankDeficient { .. }
            | Error::NoConvergence { .. }
            | Error::Singular(_)
            | Error::Numeric(_)
            | Error::Degenerate(_)
            | Error::BootstrapFailures { .. } => 3,
            _ => 2,
        }
    }
}
