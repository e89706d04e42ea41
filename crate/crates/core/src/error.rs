use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("time span is empty or negative: start {start}, end {end}")]
    NonPositiveSpan { start: i64, end: i64 },

    #[error("series has zero variance")]
    ZeroVariance,

    #[error("series too short: need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("lag {lag} out of range for a grid of {count} buckets")]
    LagOutOfRange { lag: i64, count: usize },

    #[error("sequences differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("frames are not on the same time grid: {0}")]
    GridMismatch(String),

    #[error("invalid variant suffix {0:?}")]
    InvalidVariant(String),

    #[error("unknown granularity {0:?}")]
    InvalidGranularity(String),

    #[error("crossed book at t={t_ms}: best bid {max_bid} >= best ask {min_ask}")]
    CrossedBook { t_ms: i64, max_bid: f64, min_ask: f64 },

    #[error("order book side {side} is empty at t={t_ms}")]
    EmptySide { t_ms: i64, side: &'static str },

    #[error("sentiment requested but lexicon category {0:?} is missing")]
    MissingCategory(String),

    #[error("invalid lexicon {category:?}: {reason}")]
    InvalidLexicon { category: String, reason: String },

    #[error("no candidate frames with a usable correlation")]
    NoCandidates,

    #[error("model term {0} has no matching frame")]
    MissingTermFrame(String),

    #[error("duplicate frame {0}")]
    DuplicateFrame(String),

    #[error("actual value is zero at bucket {index}")]
    ZeroActual { index: usize },

    #[error("predictions and actuals have no overlapping entries")]
    EmptyOverlap,

    #[error("invalid planted spec: {0}")]
    SpecInvalid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: u64,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(source_name: &str, line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.to_string(),
            line,
            message: message.into(),
        }
    }

    /// Analysis failures (as opposed to bad input data).
    pub fn is_analysis_failure(&self) -> bool {
        matches!(self, Error::NoCandidates)
    }
}
