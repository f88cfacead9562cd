use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("window holds {len} of {capacity} readings")]
    NotFull { len: usize, capacity: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("calibration data is empty")]
    EmptyCalibration,

    #[error("series has zero variance")]
    DegenerateVariance,

    #[error("training diverged: final loss {0}")]
    Diverged(f64),

    #[error("no data for mote {mote} in the requested range")]
    NoData { mote: u32 },

    #[error("invalid {field}: {reason}")]
    Invalid { field: String, reason: String },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
