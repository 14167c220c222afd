use thiserror::Error;

/// Errors raised anywhere in the signature pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("schedule does not fit: {0}")]
    ScheduleOverflow(String),

    #[error("tag index {index} out of range for {tag_count} tags")]
    TagIndexOutOfRange { index: usize, tag_count: usize },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("window of {window} samples exceeds input of {len}")]
    WindowTooLarge { window: usize, len: usize },

    #[error("no backscatter detected")]
    NoBackscatter,

    #[error("crossed segment bounds: {0}")]
    CrossedBounds(String),

    #[error("series of length {len} is shorter than {required}")]
    SeriesTooShort { len: usize, required: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("infeasible box constraint: nu * l = {0} < 1")]
    InfeasibleNu(f64),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("correlation undefined for zero-variance series")]
    UndefinedCorrelation,

    #[error("session span {span_s}s exceeds coherence budget {budget_s}s")]
    CoherenceBudgetExceeded { span_s: f64, budget_s: f64 },

    #[error("malformed timeline: {0}")]
    MalformedTimeline(String),

    #[error("trace format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
