use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    /// Every level of the jitter schedule failed; carries the last jitter tried.
    #[error("covariance matrix is singular (last jitter tried: {jitter:e})")]
    SingularCovariance { jitter: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("mode search did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    ModeNotConverged { iterations: usize, grad_norm: f64 },

    #[error("all {starts} optimisation starts failed: {details}")]
    FitFailed { starts: usize, details: String },

    #[error("unsupported data for this model: {0}")]
    Unsupported(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable snake-case name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::NotPositiveDefinite(_) => "not_positive_definite",
            Error::SingularCovariance { .. } => "singular_covariance",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::InvalidData(_) => "invalid_data",
            Error::ModeNotConverged { .. } => "mode_not_converged",
            Error::FitFailed { .. } => "fit_failed",
            Error::Unsupported(_) => "unsupported",
            Error::Numerical(_) => "numerical",
            Error::Row { .. } => "row",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
