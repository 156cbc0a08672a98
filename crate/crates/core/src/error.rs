use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("matrix of order {dim} exceeds the dense limit of {max}")]
    UnsupportedSize { dim: usize, max: usize },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("Gamma({shape}, rate) has no interior mode: shape must exceed 1")]
    NoInteriorMode { shape: f64 },

    #[error("stationary point at {x} is not a maximum (second derivative {curvature:e})")]
    NotAMaximum { x: f64, curvature: f64 },

    #[error("no convergence after {iterations} iterations: {detail}")]
    NoConvergence { iterations: usize, detail: String },

    #[error("hyperparameter search hit the cap of {evaluations} evaluations; best point {best:?} (objective {value})")]
    OptimizerCap {
        evaluations: usize,
        best: Vec<f64>,
        value: f64,
    },

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate row: {0}")]
    DuplicateRow(String),

    #[error("no observations with a positive observed value to score")]
    EmptyMetric,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::NotAMaximum { .. }
                | Error::NoConvergence { .. }
                | Error::OptimizerCap { .. }
                | Error::Degenerate(_)
        )
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
