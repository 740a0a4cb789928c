use thiserror::Error;

pub type Result<T, E = GeoError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeoError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("|grad phi| = {norm:.3e} below the degeneracy floor at grid index {index}")]
    DegenerateGradient { index: usize, norm: f64 },

    #[error("level set is not a certified distance function (max ||grad phi| - 1| = {deviation:.3e})")]
    NotDistanceFunction { deviation: f64 },

    #[error("support of the smeared delta reaches the box boundary at grid index {index}")]
    InterfaceTooCloseToBoundary { index: usize },

    #[error("smear width {epsilon:.3e} is below two grid spacings ({min:.3e})")]
    KernelTooNarrow { epsilon: f64, min: f64 },

    #[error("shape does not fit the grid with margin {margin:.3e}")]
    ShapeTouchesBoundary { margin: f64 },

    #[error("time step {dt:.3e} exceeds the stability bound {limit:.3e}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("level set has no interface (phi has uniform sign)")]
    NoInterface,

    #[error("energy increased for {consecutive} consecutive steps at step {step} ({before:.6e} -> {after:.6e})")]
    NonMonotoneEnergy {
        step: usize,
        consecutive: usize,
        before: f64,
        after: f64,
    },

    #[error("operation expects a {expected} functional")]
    WrongFunctional { expected: &'static str },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
