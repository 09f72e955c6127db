use thiserror::Error;

/// Errors raised by the simulation and verification layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlockError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A state or series violates a structural invariant (shape, finiteness, ordering).
    #[error("integrity error: {0}")]
    Integrity(String),

    /// Integration produced a non-finite value.
    #[error("numerical overflow at step {step} (t = {time})")]
    Overflow { step: usize, time: f64 },

    /// A theorem hypothesis does not hold for the supplied data.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    /// A quantity was requested outside the decay regime where it is defined.
    #[error("regime error: {0}")]
    Regime(String),

    /// An initial density specification is unusable (e.g. not compactly supported).
    #[error("initial density spec error: {0}")]
    Spec(String),

    /// A sample falls outside the deposition grid.
    #[error("coverage error: sample {sample} at {position:?} lies outside the grid")]
    Coverage { sample: usize, position: Vec<f64> },

    /// Scenario configuration failed validation; `path` names the offending field.
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl FlockError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        FlockError::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for FlockError {
    fn from(err: std::io::Error) -> Self {
        FlockError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, FlockError>;
