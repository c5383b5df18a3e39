use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// The post-selection amplitude vanished, so the weak value is undefined.
    #[error("degenerate post-selection at ell = {ell:?} (probability {probability:e})")]
    DegeneratePostSelection { ell: Option<i32>, probability: f64 },

    #[error("insufficient signal at ell = {ell}, basis {basis}: bias-corrected total {total}")]
    InsufficientSignal {
        ell: i32,
        basis: &'static str,
        total: f64,
    },

    #[error("fit failed for {model} after {iterations} iterations (last width {last:?})")]
    FitFailure {
        model: String,
        iterations: usize,
        last: Vec<f64>,
    },

    #[error("degenerate weights: zero uncertainty on inconsistent data at x = {x}")]
    DegenerateWeights { x: f64 },

    #[error("unknown fit model `{0}`")]
    UnknownModel(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
