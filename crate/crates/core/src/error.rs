use thiserror::Error;

/// Errors raised by the model, simulation, scaling and statistics layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),
    /// Vector lengths do not line up.
    #[error("shape error: {0}")]
    Shape(String),
    /// The configuration is inconsistent (wrong marginal, missing component, hash mismatch).
    #[error("configuration error: {0}")]
    Config(String),
    /// The configuration violates a feasibility condition of the limit theorem.
    #[error("infeasible configuration: {0}")]
    Infeasible(String),
    /// An object is used before it is ready.
    #[error("state error: {0}")]
    State(String),
    /// Not enough data for the requested procedure.
    #[error("size error: {0}")]
    Size(String),
    /// A tail fit could not be carried out.
    #[error("fit error: {0}")]
    Fit(String),
    /// Quadrature or another numerical routine did not converge.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// The operation is not available for this input.
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Lower-case name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Shape(_) => "shape",
            Error::Config(_) => "config",
            Error::Infeasible(_) => "infeasible",
            Error::State(_) => "state",
            Error::Size(_) => "size",
            Error::Fit(_) => "fit",
            Error::Numeric(_) => "numeric",
            Error::Unsupported(_) => "unsupported",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
