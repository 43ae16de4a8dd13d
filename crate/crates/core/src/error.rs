use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid refinement level {0}")]
    InvalidLevel(u32),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("matrix is not symmetric positive definite (smallest eigenvalue {floor:e})")]
    NotPositiveDefinite { floor: f64 },

    #[error("operators are defined over different inner-product matrices")]
    GramMismatch,

    #[error(
        "operator is not self-adjoint in the mass-matrix inner product (residual {residual:e})"
    )]
    NotSelfAdjoint { residual: f64 },

    #[error("unsupported Padé order ({p}, {q}); only diagonal orders 1..=6 are available")]
    UnsupportedPadeOrder { p: usize, q: usize },

    #[error("Padé denominator is singular")]
    SingularDenominator,

    #[error("invalid time step {0}")]
    InvalidStep(f64),

    #[error("zero state cannot be normalized or measured")]
    ZeroState,

    #[error("approximation order undefined: error {error:e} at level {level} is at round-off")]
    OrderUndefined { level: u32, error: f64 },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("quadrature rule needs an even number of sub-steps for Simpson, got {0}")]
    OddSimpson(usize),

    #[error("contraction constant K = {0} is not below 1")]
    ContractionViolated(f64),

    #[error("iterate left the Lipschitz ball (sup {sup:e} > radius {radius:e})")]
    LeftLipschitzBall { sup: f64, radius: f64 },

    #[error("Picard iteration did not converge in {iterations} iterations (bound {bound:e})")]
    NotConverged { iterations: usize, bound: f64 },

    #[error("window {index}: {source}")]
    Window {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed matrix file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
