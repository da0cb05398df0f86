use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] modsc::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("output directory {0} exists and is not empty (use --force to replace it)")]
    OutputExists(PathBuf),

    #[error("missing artifact {0}; run the upstream stage first")]
    MissingArtifact(PathBuf),

    #[error("{0}")]
    Usage(String),

    #[error("{failed} verification check(s) failed")]
    ChecksFailed { failed: usize },
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 0 success, 1 validation error, 2 runtime failure, 3 failed checks.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::ChecksFailed { .. } => 3,
            CliError::OutputExists(_) | CliError::MissingArtifact(_) | CliError::Usage(_) => 1,
            CliError::Core(e) => {
                if is_validation(e) {
                    1
                } else {
                    2
                }
            }
            CliError::Io { .. } => 2,
        }
    }
}

fn is_validation(e: &modsc::Error) -> bool {
    use modsc::Error as E;
    match e {
        E::Stage { source, .. } => is_validation(source),
        E::Config(_)
        | E::Mode(_)
        | E::InfeasibleSizes { .. }
        | E::OrphanFeature { .. }
        | E::InvalidArgument(_)
        | E::DimensionMismatch(_)
        | E::DeskScale(_)
        | E::OutOfRange { .. } => true,
        _ => false,
    }
}
