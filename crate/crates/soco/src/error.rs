use crate::solver::SolveResult;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("K^T K is numerically singular (condition estimate {cond:.3e} exceeds {limit:.1e})")]
    SingularGram { cond: f64, limit: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("noise covariance is not symmetric positive definite")]
    CovarianceNotPd,

    #[error("inconsistent noise spec: {0}")]
    NoiseSpec(String),

    #[error("impulse response inconsistent with f(0) = I: {0}")]
    ImpulseNotNormalized(String),

    #[error("system matrix A is unstable (spectral radius {rho:.6})")]
    UnstableSystem { rho: f64 },

    #[error("Riccati iteration did not converge after {iters} iterations (residual {residual:.3e})")]
    RiccatiNotConverged { iters: usize, residual: f64 },

    #[error(
        "solver exceeded {max_iter} iterations (primal residual {primal:.3e}, dual residual {dual:.3e})"
    )]
    MaxIterations {
        max_iter: usize,
        primal: f64,
        dual: f64,
        best: Box<SolveResult>,
    },

    #[error("solver failure in window {window}: {source}")]
    Window {
        window: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("instance too large for the grid oracle (n*T = {size} > {limit})")]
    InstanceTooLarge { size: usize, limit: usize },

    #[error("operation requires a scalar (m = 1) instance")]
    NotScalar,

    #[error("operation requires a bounded noise family with epsilon set")]
    UnboundedNoise,

    #[error("runs come from mismatched realizations: {0}")]
    MismatchedRealization(String),

    #[error("power iteration did not converge after {iters} iterations")]
    PowerIterationNotConverged { iters: usize },

    #[error("config error at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("{aborted} of {total} samples aborted (limit is 0.1%)")]
    TooManyAborts { aborted: usize, total: usize },

    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
