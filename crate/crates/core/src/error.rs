use std::path::PathBuf;

/// Errors raised by the solver layers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid species set: {0}")]
    InvalidSpecies(String),

    #[error("degenerate composition: mass fractions sum to {sum:e}, below the threshold")]
    DegenerateComposition { sum: f64 },

    #[error("invalid composition: {0}")]
    InvalidComposition(String),

    #[error("species {index} has mass fraction {value:e}, not strictly positive")]
    NotStrictlyPositive { index: usize, value: f64 },

    #[error("linear solve failed: {0}")]
    LinearSolveFailed(String),

    #[error("rate model evaluated outside its domain: {0}")]
    DomainViolation(String),

    #[error("rate model `{model}` rejected: {reason}")]
    ModelRejected { model: String, reason: String },

    #[error("step rejected: {0}")]
    StepRejected(String),

    #[error("pressure Poisson solve failed: relative residual {residual:e}")]
    PoissonSolveFailed { residual: f64 },

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
