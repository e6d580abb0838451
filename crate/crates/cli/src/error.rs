use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("input file {} not found", .0.display())]
    MissingInput(std::path::PathBuf),
    #[error(transparent)]
    Core(#[from] etld::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_TRAINING: i32 = 3;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Core(etld::Error::Config(_)) => EXIT_USAGE,
            CliError::Core(etld::Error::Training(_)) => EXIT_TRAINING,
            _ => EXIT_DATA,
        }
    }
}
