use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("index error: {0}")]
    Index(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate probability {prob:e} for action {action} (floor {floor:e})")]
    DegenerateProbability { action: usize, prob: f64, floor: f64 },
    #[error("environment protocol error: {0}")]
    Protocol(String),
    #[error("numerical blow-up: {0}")]
    NumericalBlowup(String),
    #[error("brute-force oracle refused: {0}")]
    OracleRefused(String),
    #[error("degenerate generator: {0}")]
    DegenerateGenerator(String),
}

pub type Result<T> = std::result::Result<T, Error>;
