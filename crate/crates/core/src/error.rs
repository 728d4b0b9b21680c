use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// An operation was asked to evaluate at a point where it degenerates
    /// (zero denominator, log of a non-positive argument, ...).
    #[error("singular input: {0}")]
    Singular(String),

    /// The model parameters violate a structural assumption of the solution.
    #[error("unsupported configuration: {0}")]
    UnsupportedConfiguration(String),

    /// A denominator or bracket required by the closed form failed to exist;
    /// usually means the case classification does not match the inputs.
    #[error("case inconsistency: {0}")]
    CaseInconsistency(String),

    /// A root-finder was handed a bracket with no sign change.
    #[error("bracket failure: {0}")]
    Bracket(String),

    /// The integrand of the retention map lost positivity somewhere.
    #[error("model inconsistency: {0}")]
    ModelInconsistency(String),

    /// A shooting trajectory left its admissible band before its stop event.
    #[error("shooting failure: {0}")]
    Shooting(String),

    /// A caller invoked an event handler with a state that contradicts it.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
