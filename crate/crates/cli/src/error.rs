use thiserror::Error;

/// Command failures, grouped by process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Exit code 2.
    #[error("{0}")]
    Config(String),
    /// Exit code 3.
    #[error("{0}")]
    Simulation(String),
    /// Exit code 4.
    #[error("{0}")]
    MissingInput(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Simulation(_) => 3,
            CliError::MissingInput(_) => 4,
        }
    }
}

impl From<diffcontact::Error> for CliError {
    fn from(e: diffcontact::Error) -> Self {
        use diffcontact::Error as E;
        match e {
            E::InvalidConfig(_) | E::UnknownPreset { .. } | E::Serialization(_) | E::ShapeMismatch(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Simulation(e.to_string()),
        }
    }
}

pub fn write_failed(path: &std::path::Path, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("cannot write {}: {e}", path.display()))
}
