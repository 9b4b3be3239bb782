use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("broadcast error: {0}")]
    Broadcast(String),

    #[error("conv mode error: {0}")]
    ConvMode(String),

    #[error("invalid coordinate (lat={lat}, lon={lon})")]
    InvalidCoordinate { lat: f64, lon: f64 },

    #[error("cannot impute: tensor has no finite values")]
    CannotImpute,

    #[error("invalid window length {0}")]
    InvalidWindow(usize),

    #[error("degenerate range: min {min} equals max {max}")]
    DegenerateRange { min: f64, max: f64 },

    #[error("insufficient history: {total} days for window {window}")]
    InsufficientHistory { total: usize, window: usize },

    #[error("too few samples to split: {0} (need at least 5)")]
    TooFewSamples(usize),

    #[error("invalid dates: {0}")]
    InvalidDates(String),

    #[error("invalid config field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("training split is empty")]
    EmptySplit,

    #[error("random search failed: every trial diverged")]
    SearchFailed,

    #[error("undefined variance: observations are constant")]
    UndefinedVariance,

    #[error("undefined correlation: a series is constant")]
    UndefinedCorrelation,

    #[error("undefined percent bias: observations sum to zero")]
    UndefinedBias,

    #[error("invalid metric series: {0}")]
    InvalidSeries(String),

    #[error("unknown metric `{0}`")]
    UnknownMetric(String),

    #[error("no attention records")]
    EmptyRecords,

    #[error("no records in period {0}")]
    EmptyPeriod(String),

    #[error("percentile {0} outside (0, 100]")]
    InvalidPercentile(f64),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}
