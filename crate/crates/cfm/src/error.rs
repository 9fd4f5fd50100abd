use thiserror::Error;

/// Errors produced by the solver pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on the inputs was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Interface geometry could not be resolved (root finding, projection,
    /// or piece pairing failed where the topology required a result).
    #[error("geometry failure: {0}")]
    Geometry(String),

    /// A local patch system was numerically singular.
    #[error("singular local system (condition estimate {cond:.3e}): {context}")]
    SingularSystem { cond: f64, context: String },

    /// The global linear solve did not reach its residual tolerance.
    #[error("linear solver failure: {0}")]
    SolverFailure(String),

    /// I/O error while writing reports or dumps.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn geometry(msg: impl Into<String>) -> Self {
        Error::Geometry(msg.into())
    }
}
