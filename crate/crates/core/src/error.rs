use std::path::PathBuf;

/// Errors produced by the simulator library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite sample {value} at grid index {index}")]
    NonFinite { index: usize, value: f64 },

    #[error("length mismatch: expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("non-positive density {value} at grid index {index}")]
    NonPositiveDensity { index: usize, value: f64 },

    #[error("vacuum reached in sigma variables at grid index {index} (power base {base})")]
    Vacuum { index: usize, base: f64 },

    #[error("density mean deviates from 1 by {deviation:e}; stream function needs zero-mean rho - 1")]
    NonzeroMean { deviation: f64 },

    #[error("initial data lost positivity (min rho = {rho_min}); use a smaller delta")]
    PerturbationTooLarge { rho_min: f64 },

    #[error(
        "kernel tail tolerance {tolerance:e} unreachable with at most {max_shells} shells (estimate {estimate:e})"
    )]
    KernelTolerance {
        tolerance: f64,
        max_shells: usize,
        estimate: f64,
    },

    #[error("need at least {needed} records, got {got}")]
    InsufficientRecords { needed: usize, got: usize },

    #[error("records are not at a uniform cadence (step {index})")]
    NonUniformCadence { index: usize },

    #[error("decay fit undefined: non-positive value {value} at t = {t}")]
    NonPositiveSeries { t: f64, value: f64 },

    #[error("blow-up at t = {}: {} = {:e} crossed {:e}", .0.t, .0.monitor, .0.value, .0.threshold)]
    Blowup(Box<crate::integrator::BlowupEvent>),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
