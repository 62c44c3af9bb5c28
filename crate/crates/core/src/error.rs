use thiserror::Error;

/// Errors raised by the modelling library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument was outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A documented precondition did not hold.
    #[error("precondition failed: {0}")]
    Precondition(String),

    /// A lag polynomial used as a denominator has a root on or inside the unit circle.
    #[error("unstable filter: {0}")]
    Unstable(String),

    /// The denominator of a rational lag vanishes at B = 1.
    #[error("singular gain: denominator sums to {0}")]
    SingularGain(f64),

    /// Input file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// The optimizer stopped without meeting its tolerance.
    #[error("no convergence after {iterations} iterations (best objective {best_value}): {message}")]
    Convergence {
        iterations: usize,
        best_value: f64,
        best_params: Vec<f64>,
        message: String,
    },

    /// The linear predictor left the admissible range.
    #[error("linear predictor diverged at t = {t} (eta = {eta})")]
    Divergence { t: usize, eta: f64 },

    /// A named series is absent from the dataset or fit.
    #[error("unknown series `{0}`")]
    UnknownSeries(String),

    /// Series lengths or names do not line up.
    #[error("misaligned data: {0}")]
    Misaligned(String),

    /// Every candidate of a search failed.
    #[error("no admissible candidate: {0}")]
    NoCandidate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
