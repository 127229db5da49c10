use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("table is signaling: {0}")]
    Signaling(String),

    #[error("search budget exceeded: {0}")]
    Budget(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("quantum scenario invalid: {0}")]
    Quantum(String),

    #[error("internal consistency violation: {0}")]
    Internal(String),
}
