use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },

    #[error("invalid filter: {0}")]
    FilterSpec(String),

    #[error("window out of range: {0}")]
    Range(String),

    #[error("invalid argument: {0}")]
    Arg(String),

    #[error("invalid trial: {0}")]
    InvalidTrial(String),

    #[error("frame dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    #[error("series is empty")]
    EmptySeries,

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("protocol not feasible: {0}")]
    Protocol(String),

    #[error("template bank is empty")]
    EmptyBank,

    #[error("word {0:?} contains non-alphabetic characters")]
    NonAlphabetic(String),

    #[error("events overlap: event at {second_s} s starts before the previous one ends")]
    Overlap { second_s: f64 },
}
