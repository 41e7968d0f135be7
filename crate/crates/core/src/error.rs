use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("not a unit versor: {0}")]
    NonUnitVersor(String),

    #[error("cannot extract a finite point from an ideal (direction) element")]
    DegeneratePoint,

    #[error("degenerate 6D rotation: column {column} {reason}")]
    DegenerateRotation { column: usize, reason: &'static str },

    #[error("backward called on an empty tape")]
    EmptyTape,

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("unstable integration at step {step}: energy {energy:.3e} exceeds 10x budget {budget:.3e}; use a smaller dt")]
    UnstableIntegration { step: usize, energy: f64, budget: f64 },

    #[error("training diverged at step {step}: loss {loss:.3e} vs initial {initial:.3e}")]
    Divergence { step: usize, loss: f64, initial: f64 },

    #[error("no grasp passed the success test for object {object}: {diagnostics}")]
    NoPassingGrasps { object: String, diagnostics: String },

    #[error("configuration does not match checkpoint; differing keys: {}", .0.join(", "))]
    ConfigMismatch(Vec<String>),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
