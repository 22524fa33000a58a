use thiserror::Error;

/// Failures surfaced by the command layer, each with a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("manifest: {0}")]
    Manifest(String),

    #[error("{0}")]
    Core(#[from] vkflow_core::Error),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("verification failed: {}", .0.iter().map(|r| r.name.as_str()).collect::<Vec<_>>().join(", "))]
    Verification(Vec<vkflow_core::verify::CheckReport>),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Manifest(_) | CliError::Io(_) => 1,
            CliError::Core(e) => core_exit_code(e),
            CliError::Numerical(_) => 2,
            CliError::Verification(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Manifest(_) => "manifest",
            CliError::Core(e) if core_exit_code(e) == 2 => "numerical",
            CliError::Core(_) => "validation",
            CliError::Numerical(_) => "numerical",
            CliError::Verification(_) => "verification",
            CliError::Io(_) => "io",
        }
    }
}

fn core_exit_code(e: &vkflow_core::Error) -> u8 {
    use vkflow_core::Error as E;
    match e {
        E::InvalidParameter { .. } | E::GridMismatch(_) => 1,
        _ => 2,
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
