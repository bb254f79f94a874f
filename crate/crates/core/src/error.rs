use thiserror::Error;

/// Errors raised by the library and surfaced by the CLI and the C ABI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("pseudo-gradient is not strongly monotone (mu = {mu:.6e})")]
    NotStronglyMonotone { mu: f64 },

    #[error("no strongly connected graph after {attempts} attempts")]
    GraphNotConnected { attempts: usize },

    #[error("invalid communication graph: {0}")]
    InvalidGraph(String),

    #[error("divergence at iteration {iteration}: {context}")]
    Divergence { iteration: usize, context: String },

    #[error("no contraction certificate: q = {q:.6e} is not below 1")]
    NoCertificate { q: f64 },

    #[error("solver did not converge in {iterations} iterations (last residual {residual:.6e})")]
    MaxIterations { iterations: usize, residual: f64 },

    #[error("step size alpha = {alpha:.6e} exceeds the certificate {certificate:.6e}")]
    AlphaNotCertified { alpha: f64, certificate: f64 },

    #[error("configuration error: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("oracle mismatch: {0}")]
    OracleMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Json(_)
            | Error::InvalidArgument(_)
            | Error::AlphaNotCertified { .. }
            | Error::DimensionMismatch { .. }
            | Error::InvalidGraph(_)
            | Error::NotStronglyMonotone { .. }
            | Error::GraphNotConnected { .. } => 2,
            Error::Divergence { .. } | Error::MaxIterations { .. } | Error::NoCertificate { .. } => 3,
            Error::OracleMismatch(_) => 4,
            Error::Io(_) => 1,
        }
    }

    /// Short machine-readable tag for the error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::NotStronglyMonotone { .. } => "not_strongly_monotone",
            Error::GraphNotConnected { .. } => "graph_not_connected",
            Error::InvalidGraph(_) => "invalid_graph",
            Error::Divergence { .. } => "divergence",
            Error::NoCertificate { .. } => "no_certificate",
            Error::MaxIterations { .. } => "max_iterations",
            Error::AlphaNotCertified { .. } => "alpha_not_certified",
            Error::Config(_) => "config",
            Error::OracleMismatch(_) => "oracle_mismatch",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
