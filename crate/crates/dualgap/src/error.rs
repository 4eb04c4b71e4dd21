use thiserror::Error;

/// Crate-wide error type.
///
/// Variants group into four exit-code classes used by the CLI: input/contract
/// errors (2), assertion or numeric failures (1), solver non-convergence (3),
/// and I/O wrappers (2).
#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("weights must sum to 1 (got {sum:.17e})")]
    NotNormalized { sum: f64 },

    #[error("negative weight {value:.17e} at index {index}")]
    NegativeWeight { index: usize, value: f64 },

    #[error("metric axiom violated ({axiom}): {detail}")]
    MetricViolation { axiom: &'static str, detail: String },

    #[error("cost matrix shape {rows}x{cols} incompatible with {expected}")]
    CostShape {
        rows: usize,
        cols: usize,
        expected: String,
    },

    #[error("operation requires a metric-certified cost")]
    NotMetricCertified,

    #[error("index {index} out of bounds for size {len}")]
    IndexOutOfBounds { index: usize, len: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("contract violated: {0}")]
    ContractViolation(String),

    #[error("{what} did not converge after {iters} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iters: usize,
        residual: f64,
    },

    #[error("non-finite value produced in {0}")]
    NumericFailure(String),

    #[error("assertion failed: {0}")]
    AssertionFailed(String),

    #[error("failed to parse {path}: {detail}")]
    Parse { path: String, detail: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::AssertionFailed(_) | Error::NumericFailure(_) => 1,
            Error::NonConvergence { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
