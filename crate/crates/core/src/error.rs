use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid world: {0}")]
    InvalidWorld(String),

    #[error("invalid action pattern: {0}")]
    InvalidPattern(String),

    /// Sampled durations do not fit in one day.
    #[error("schedule overflow: non-final durations sum to {total_h:.4} h (must be < 24 h)")]
    ScheduleOverflow { total_h: f64 },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Every time-kernel value underflowed at this time of day.
    #[error("no observation supports time {t}")]
    UnsupportedTime { t: f64 },

    #[error("grid mismatch between density fields")]
    GridMismatch,

    #[error("no observations or time-grid points inside interval {0}")]
    EmptyInterval(String),

    #[error("cluster {0} has no days")]
    EmptyCluster(usize),

    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag for this error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidWorld(_) => "invalid_world",
            Error::InvalidPattern(_) => "invalid_pattern",
            Error::ScheduleOverflow { .. } => "schedule_overflow",
            Error::InvalidData(_) => "invalid_data",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::UnsupportedTime { .. } => "unsupported_time",
            Error::GridMismatch => "grid_mismatch",
            Error::EmptyInterval(_) => "empty_interval",
            Error::EmptyCluster(_) => "empty_cluster",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub(crate) fn invalid_arg(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
