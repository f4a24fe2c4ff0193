use thiserror::Error;

/// Errors raised by the simulation, compilation and optimization layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("integration instability at t = {t:.6}: {detail}; retry with a smaller time step")]
    Instability { t: f64, detail: String },

    #[error("unsupported pulse sequence: {0}")]
    UnsupportedSequence(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("Fock space of dimension {dim} exceeds the configured budget {budget}")]
    Budget { dim: usize, budget: usize },

    #[error("non-Hermitian Hamiltonian term: {0}")]
    NonHermitian(String),

    #[error("state norm drifted by {drift:.3e} at t = {t:.6}; reduce the time step")]
    NormDrift { t: f64, drift: f64 },

    #[error("undefined cooling rate: {0}")]
    UndefinedRate(String),

    #[error("scenario error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema { .. } => 2,
            Error::Io(_) | Error::Csv(_) => 1,
            _ => 3,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::schema(format!("line {} column {}", e.line(), e.column()), e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
