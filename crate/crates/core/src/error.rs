use thiserror::Error;

/// Errors raised by the simulator core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed document: {0}")]
    Parse(String),

    #[error("missing required field `{0}`")]
    MissingField(String),

    #[error("invalid value at `{path}`: {reason}")]
    Invalid { path: String, reason: String },

    #[error("value out of domain in {op}: {reason}")]
    Domain { op: &'static str, reason: String },

    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{op} did not converge after {iterations} iterations")]
    NoConvergence { op: &'static str, iterations: usize },

    #[error("air stream cannot absorb {q_w:.1} W (undersized air flow)")]
    AirCapacity { q_w: f64 },

    #[error("trace: {0}")]
    Trace(String),

    #[error("physics failure at agent step {step}: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(op: &'static str, reason: impl Into<String>) -> Error {
    Error::Domain {
        op,
        reason: reason.into(),
    }
}
