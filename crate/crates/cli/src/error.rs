use dapsm::DapsmError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("config: {0}")]
    Config(#[from] toml::de::Error),

    #[error(transparent)]
    Core(#[from] DapsmError),
}

impl CliError {
    /// 0 ok, 1 usage or schema, 2 numerical, 3 no balanced `w`.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(DapsmError::NoBalancedW(_)) => 3,
            CliError::Core(DapsmError::Input(_)) => 1,
            CliError::Core(_) => 2,
            _ => 1,
        }
    }
}
