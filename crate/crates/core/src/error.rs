use thiserror::Error;

/// Errors raised by the reachability, identification and calibration kernels.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: dimension mismatch ({left} vs {right})")]
    DimensionMismatch {
        op: &'static str,
        left: String,
        right: String,
    },

    #[error("{op}: index {index} out of range for dimension {dim}")]
    IndexOutOfRange { op: &'static str, index: usize, dim: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("support direction must be nonzero")]
    ZeroDirection,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("SVD did not converge after {sweeps} sweeps")]
    SvdNonConvergence { sweeps: usize },

    #[error("LP exceeded the iteration cap of {cap} pivots")]
    LpIterationLimit { cap: usize },

    #[error("LP reported an unbounded direction (inputs not finite?)")]
    LpUnbounded,

    #[error("(C, A) is not observable: observability rank {rank} < {required}")]
    Unobservable { rank: usize, required: usize },

    #[error(
        "regressor matrix is rank deficient: observed rank {observed}, required {required}; \
         collect more (or more exciting) input-output data"
    )]
    RankDeficient { observed: usize, required: usize },

    #[error("propagated set is not finite at step {step}")]
    NonFinite { step: usize },

    #[error(
        "conformal quantile is infinite: n_cal = {n_cal} is too small for delta = {delta}; \
         add calibration trajectories"
    )]
    InfiniteQuantile { n_cal: usize, delta: f64 },

    #[error("zonotope has {found} generators, token layout allows {max}")]
    TooManyGenerators { found: usize, max: usize },

    #[error("weight bundle: {0}")]
    Weights(String),

    #[error("residual bound violated: {0}")]
    ResidualBound(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape(rows: usize, cols: usize) -> String {
    format!("{rows}x{cols}")
}
