use thiserror::Error;

/// Errors produced by model construction, drive synthesis and propagation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("density matrix trace deviates from 1 by {deviation:.3e} (limit {limit:.1e})")]
    NotNormalized { deviation: f64, limit: f64 },

    #[error("density matrix is not Hermitian (max asymmetry {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("density matrix has negative eigenvalue {eigenvalue:.3e}")]
    NotPositive { eigenvalue: f64 },

    #[error("tone {index} ({target}) at {carrier_mhz} MHz violates Nyquist limit {limit_mhz} MHz")]
    NyquistViolation {
        index: usize,
        target: &'static str,
        carrier_mhz: f64,
        limit_mhz: f64,
    },

    #[error("integrator step size underflow at t = {t_us} µs (step {step_us:.3e} µs)")]
    StepSizeUnderflow { t_us: f64, step_us: f64 },

    #[error("integrator failed to meet tolerance at t = {t_us} µs after {rejections} rejected steps")]
    ToleranceFailure { t_us: f64, rejections: usize },

    #[error("amplitude calibration did not converge after {iterations} iterations (best {best_rel:.3e} relative)")]
    CalibrationDiverged { iterations: usize, best_rel: f64 },

    #[error("drive has {count} tones addressing the {target} transition; the rotating-frame model needs at most one")]
    AmbiguousRwaDrive { target: &'static str, count: usize },

    #[error("fit problem has no free parameters")]
    NoFreeParameters,

    #[error("empty or invalid grid: {0}")]
    InvalidGrid(String),

    #[error("all grid cells failed")]
    AllCellsFailed,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
