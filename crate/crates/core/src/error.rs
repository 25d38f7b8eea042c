use std::path::PathBuf;

/// Errors raised by the laboratory. Each variant names a contract violation
/// that the CLI maps to exit code 2, except `Config` and `Io` which map to 1.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("spectrum outside the admissible cone: {0}")]
    Domain(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("section is not contained in the domain")]
    Containment,
    #[error("rank deficiency: {0}")]
    Rank(String),
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad invocation rather than by the mathematics.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_nk(n: usize, k: usize) -> Result<()> {
    if n == 0 || k > n {
        return Err(Error::Argument(format!("need 0 <= k <= n, n >= 1 (got n={n}, k={k})")));
    }
    Ok(())
}

pub(crate) fn check_quotient(n: usize, k: usize) -> Result<()> {
    if n < 2 || k >= n {
        return Err(Error::Argument(format!("need 0 <= k < n, n >= 2 (got n={n}, k={k})")));
    }
    Ok(())
}
