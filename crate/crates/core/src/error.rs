use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("steady state is ambiguous: generator null space has dimension {dimension}")]
    AmbiguousSteadyState { dimension: usize },

    #[error("integration failed at t = {t} ns: {reason}")]
    Integration { t: f64, reason: String },

    #[error("parameter domain violated for {operator}: rate {rate} is negative")]
    ParameterDomain { operator: &'static str, rate: f64 },

    #[error("normalization undefined: {0}")]
    UndefinedNormalization(String),

    #[error("grid coverage: {0}")]
    Coverage(String),

    #[error("unsupported time ordering: {0}")]
    UnsupportedOrdering(String),

    #[error("trajectory {index} (seed {seed}) failed: {source}")]
    Trajectory {
        index: u64,
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("file format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
