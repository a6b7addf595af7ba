use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix contains NaN or infinite entries")]
    NonFinite,
    #[error("iterative kernel did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("matrix is not symmetric (asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is rank deficient (pivot {pivot:e} below threshold {threshold:e})")]
    RankDeficient { pivot: f64, threshold: f64 },
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("point is not on the manifold (residual {residual:e})")]
    NotOnManifold { residual: f64 },
    #[error("step too large for a unique retraction: {0}")]
    StepTooLarge(String),
    #[error("operation not supported for this manifold: {0}")]
    UnsupportedManifold(String),
    #[error("invalid manifold specification: {0}")]
    InvalidSpec(String),
    #[error("projection is not unique: {0}")]
    NonUniqueProjection(String),
    #[error("point is infeasible (violation {violation:e})")]
    Infeasible { violation: f64 },
    #[error("approximate projection is not certified non-expansive: {0}")]
    NotNonExpansive(String),
    #[error("invalid step schedule: {0}")]
    InvalidSchedule(String),
    #[error("iterate left the monitored ball at step {step} (norm {norm:e} > radius {radius:e})")]
    InfeasibleDrift { step: usize, norm: f64, radius: f64 },
    #[error("window [{start}, {end}] is outside the recorded time span [0, {span}]")]
    WindowOutOfRange { start: f64, end: f64, span: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown check `{0}`")]
    UnknownCheck(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
