use ngfa::NgfaError;
use thiserror::Error;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("all {0} restarts failed; see run.json for the per-restart messages")]
    AllRestartsFailed(usize),

    #[error(transparent)]
    Lib(#[from] NgfaError),

    #[error("cannot build thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::ThreadPool(_) => EXIT_USAGE,
            CliError::AllRestartsFailed(_) => EXIT_NUMERICAL,
            CliError::Lib(e) => match e {
                NgfaError::Domain(_) | NgfaError::Config(_) | NgfaError::Usage(_) => EXIT_USAGE,
                NgfaError::Numerical { .. } => EXIT_NUMERICAL,
                NgfaError::Data(_) | NgfaError::Io(_) | NgfaError::Json(_) | NgfaError::Csv(_) => EXIT_DATA,
            },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(NgfaError::Io(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Lib(NgfaError::Json(e))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
