use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid resolution: {0}")]
    InvalidResolution(String),
    #[error("level {level} outside window [{min}, {max}]")]
    LevelOutOfWindow { level: i32, min: i32, max: i32 },
    #[error("power iteration did not converge after {iterations} iterations (bracket [{lower}, {upper}])")]
    NonConvergence {
        iterations: usize,
        lower: f64,
        upper: f64,
    },
    #[error("stopping constant doubled {doublings} times without meeting the small-size condition: {detail}")]
    DoublingCap { doublings: u32, detail: String },
    /// A guaranteed existence statement failed; signals a bug rather than bad input.
    #[error("internal defect: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
