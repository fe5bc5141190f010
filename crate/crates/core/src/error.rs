use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("unsupported derivative order {order} (maximum {max})")]
    UnsupportedOrder { order: usize, max: usize },

    #[error("sample point ({:.6}, {:.6}, {:.6}) lies outside the interpolation domain", .point[0], .point[1], .point[2])]
    OutOfDomain { point: [f64; 3] },

    #[error("domain margin too small: {what} needs box half-width >= {required:.4}, have {available:.4}")]
    DomainMargin {
        what: String,
        required: f64,
        available: f64,
    },

    #[error("direction is not a unit vector (|eta| = {norm:.16})")]
    InvalidDirection { norm: f64 },

    #[error("invalid obstacle: {0}")]
    InvalidObstacle(String),

    #[error("time step {dt} violates the stability bound {bound} for spacing {h}")]
    Stability { dt: f64, bound: f64, h: f64 },

    #[error("incompatible initial data: boundary residual {residual:.3e} exceeds {threshold:.3e}")]
    IncompatibleData { residual: f64, threshold: f64 },

    #[error("solution diverged (non-finite value) at step {step}")]
    Divergence { step: usize },

    #[error("extension trace {trace:.3e} exceeds tolerance {tolerance:.3e}")]
    ExtensionTrace { trace: f64, tolerance: f64 },

    #[error("support violation in {what}: {value:.3e} outside radius {radius:.4} (tolerance {tolerance:.3e}, worst point ({:.3}, {:.3}, {:.3}))", .at[0], .at[1], .at[2])]
    Support {
        what: String,
        radius: f64,
        value: f64,
        tolerance: f64,
        at: [f64; 3],
    },

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("ray (t = {t}, r = {r}) violates r >= t/2 >= 1")]
    Hypothesis { t: f64, r: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
