use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Engine(#[from] fracvol::Error),

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("{0}")]
    Usage(String),

    /// A check ran and did not pass; the report was already printed.
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        use fracvol::Error as E;
        match self {
            Self::CheckFailed(_) => 1,
            Self::Engine(E::Conditions(_)) => 1,
            Self::Engine(E::BreachRate { .. } | E::ViabilityBreach { .. } | E::NonFinite { .. }) => 3,
            Self::Engine(_) | Self::Io { .. } | Self::Usage(_) => 2,
        }
    }
}
