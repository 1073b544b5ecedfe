use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("covariance of component {component} is singular")]
    SingularCovariance { component: usize },

    #[error("degenerate mixture fit: {0}")]
    DegenerateFit(String),

    #[error("could not calibrate missingness intercept: {0}")]
    Calibration(String),

    #[error("imputation chain failed: {0}")]
    ChainFailure(String),

    #[error("column {column} ({name}) has zero variance")]
    ZeroVariance { column: usize, name: String },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for failures of an imputation chain, which the experiment runner
    /// records instead of aborting.
    pub fn is_chain_failure(&self) -> bool {
        matches!(self, Error::ChainFailure(_))
    }
}
