use std::path::PathBuf;

use thiserror::Error;

/// Command failures, grouped by the exit status they map to.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),

    #[error("{0}")]
    Dependency(String),

    #[error("{0}")]
    Numerical(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },

    /// PSRF above the configured threshold while `strict` is set.
    #[error("{0}")]
    Convergence(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Validation(_) | CliError::Io { .. } => "validation",
            CliError::Dependency(_) => "dependency",
            CliError::Numerical(_) => "numerical",
            CliError::Convergence(_) => "convergence",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Io { .. } => 2,
            CliError::Dependency(_) => 3,
            CliError::Numerical(_) => 4,
            CliError::Convergence(_) => 5,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<odmix::Error> for CliError {
    fn from(e: odmix::Error) -> Self {
        use odmix::Error as E;
        let msg = e.to_string();
        match e {
            E::Domain(_) | E::SingularDesign { .. } | E::Config(_) | E::UnsupportedFamily { .. } | E::Unreachable { .. } | E::Empty(_) => {
                CliError::Validation(msg)
            }
            E::Evaluation { .. } | E::FitNotConverged { .. } | E::SingularInformation | E::Diagnostics(_) => CliError::Numerical(msg),
            E::Row { source, .. } => match CliError::from(*source) {
                CliError::Validation(_) => CliError::Validation(msg),
                _ => CliError::Numerical(msg),
            },
        }
    }
}
