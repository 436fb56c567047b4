use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("nonpositive horizon: T = {0}")]
    NonpositiveHorizon(f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("invalid control signal: {0}")]
    InvalidControl(String),

    #[error("nonfinite state encountered at t = {time}")]
    BlowUp { time: f64 },

    #[error("nontransverse contact with the boundary of K near t = {time}")]
    NontransverseContact { time: f64 },

    #[error("crossing directions do not alternate starting with K -> K^c (crossing {index} at t = {time})")]
    NonAlternating { index: usize, time: f64 },

    #[error("invalid crossing vector: {0}")]
    InvalidCrossingVector(String),

    #[error("normalized time {s} outside [0, {upper}]")]
    OutOfRange { s: f64, upper: f64 },

    #[error("nontransverse crossing {index}: |grad g . f| = {margin:e}, gamma undefined")]
    GammaUndefined { index: usize, margin: f64 },

    #[error("augmented mapping defined for r = 1 (got r = {0})")]
    AugmentedNeedsSingleCrossing(usize),

    #[error("problem has no box hull for U")]
    MissingBoxHull,

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for violations of the standing assumptions (transverse crossings,
    /// well-defined jump coefficients).
    pub fn is_assumption_violation(&self) -> bool {
        matches!(
            self,
            Error::NontransverseContact { .. }
                | Error::NonAlternating { .. }
                | Error::GammaUndefined { .. }
        )
    }
}
