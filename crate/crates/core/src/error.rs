use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing input file {0}")]
    MissingInput(PathBuf),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("invalid band [{f_low}, {f_high}] Hz at sampling rate {rate_hz} Hz")]
    InvalidBand { f_low: f64, f_high: f64, rate_hz: f64 },

    #[error("invalid filter order {0}: band-pass order must be a positive even number")]
    InvalidOrder(usize),

    #[error("cross-correlation undefined: at least one input has zero energy")]
    UndefinedCorrelation,

    #[error("alignment probe of {probe} samples is shorter than twice the max lag ({maxlag} samples)")]
    InsufficientProbe { probe: usize, maxlag: usize },

    #[error("insufficient samples: need {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("incompatible fingerprints: lengths {0} and {1}")]
    IncompatibleFingerprints(usize, usize),

    #[error("surprisal model has no statistics for {partition} hour {hour}")]
    ModelGap { partition: String, hour: u32 },

    #[error("incompatible scans: {0}")]
    IncompatibleScans(String),

    #[error("invalid pressure {0} hPa: must be positive")]
    InvalidPressure(f64),

    #[error("degenerate labels: both classes are required")]
    DegenerateLabels,

    #[error("incompatible row: expected {expected} features, got {got}")]
    IncompatibleRow { expected: usize, got: usize },

    #[error("infeasible stratification: class with {count} rows cannot fill {k} folds")]
    InfeasibleStratification { count: usize, k: usize },

    #[error("cannot split {len} bits into chunks of {sub_len}")]
    InvalidSplit { len: usize, sub_len: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),
}
