use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A malformed record in one of the text formats.
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },

    /// Input parsed but violates a model invariant.
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no viable T1: every candidate produced an empty cluster set")]
    NoViableT1,

    #[error("validation slice has no arrivals at the first stop")]
    EmptyValidation,

    #[error("no start-time clusters to build a timetable from")]
    NoClusters,

    #[error("timetable and arrival matrix share no stops")]
    NoStopOverlap,

    #[error("protocol {protocol} needs at least two calendar months of data, found {months}")]
    MonthSpan { protocol: char, months: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(line: u64, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
