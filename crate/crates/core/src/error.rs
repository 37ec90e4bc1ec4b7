use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid distribution spec: {0}")]
    DistributionSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("quadrature did not converge after {nodes} nodes (last change {delta:e})")]
    QuadratureNonConvergence { nodes: usize, delta: f64 },

    #[error("derivative order {0} exceeds the supported depth of 16")]
    OrderTooHigh(usize),

    #[error("G' does not have the outward sign at the search bound {0}")]
    SearchBoundTooSmall(f64),

    #[error("grid scan too coarse to resolve critical points near {0}")]
    GridTooCoarse(f64),

    #[error("{0} is not a local minimum of G")]
    NotAMinimum(f64),

    #[error("no nonvanishing even derivative up to order 16 at {0}")]
    ClassificationDepthExceeded(f64),

    #[error("rate spec undefined: {0}")]
    RateSpec(String),

    #[error("alpha = {alpha} outside the admissible range ({alpha_min}, 1)")]
    AlphaOutOfRange { alpha: f64, alpha_min: f64 },

    #[error("conditioning event has zero probability")]
    ZeroProbabilityCondition,

    #[error("conditioning event too small: log-probability {0} below -700")]
    ConditionTooSmall(f64),

    #[error("integration grid too narrow: {0}")]
    GridTooNarrow(String),

    #[error("sample {sample} is not a valid magnetization for n = {n}")]
    ParityViolation { sample: i64, n: usize },

    #[error("bisection bracket failure: {0}")]
    Bracket(String),

    #[error("config: {0}")]
    Config(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
