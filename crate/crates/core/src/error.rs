use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("event scheduled in the past (at {at}, clock {now})")]
    PastEvent { at: f64, now: f64 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl SimError {
    /// True for errors that indicate a broken model invariant rather than bad input.
    pub fn is_invariant(&self) -> bool {
        matches!(self, SimError::Invariant(_) | SimError::PastEvent { .. })
    }
}

pub type Result<T> = std::result::Result<T, SimError>;
