//! Error type shared across the crate.

use crate::glasso::GlassoSolution;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// A matrix that must be invertible (or positive-definite) is not.
    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    /// Sample covariance too ill-conditioned to invert (unpenalized mixture).
    #[error("invalid covariance estimate: {0}")]
    InvalidCovariance(String),

    /// Graphical lasso hit its sweep budget; carries the best iterate found.
    #[error("graphical lasso did not converge within {sweeps} sweeps (KKT residual {residual:.3e})")]
    NoConvergence {
        sweeps: usize,
        residual: f64,
        best: Box<GlassoSolution>,
    },

    /// Every component density underflowed for some observation.
    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    /// Every EM restart terminated degenerately.
    #[error("fit failed, all restarts degenerate:\n{0}")]
    FitFailed(String),

    #[error("not supported: {0}")]
    Unsupported(String),

    #[error("CSV parse error at line {line}: {message}")]
    CsvParse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
