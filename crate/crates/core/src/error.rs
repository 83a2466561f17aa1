use thiserror::Error;

/// Errors raised by the solvers and their inputs.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("capacity exceeded: {what} needs {needed}, cap is {cap}")]
    Capacity {
        what: &'static str,
        needed: u128,
        cap: u128,
    },

    #[error("value {value} outside domain {domain}")]
    Domain { value: f64, domain: String },

    #[error("time {time} is not a node of the grid")]
    Grid { time: f64 },

    #[error("numerical blow-up at step {step} (t = {time})")]
    NumericalBlowup { step: usize, time: f64 },

    #[error("unsupported benchmark: {0}")]
    UnsupportedBenchmark(String),

    #[error("unsupported input: {0}")]
    UnsupportedInput(String),

    #[error("intensity {value} outside [{lo}, {hi}]")]
    InvalidIntensity { value: f64, lo: f64, hi: f64 },

    #[error("incomplete jump tree: {0}")]
    Tree(String),

    #[error("scheme inconsistency: {0}")]
    SchemeInconsistency(String),

    #[error("unknown benchmark problem `{0}`")]
    UnknownProblem(String),

    #[error("config error at {pointer}: {message}")]
    Config { pointer: String, message: String },

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config {
            pointer: String::new(),
            message: e.to_string(),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
