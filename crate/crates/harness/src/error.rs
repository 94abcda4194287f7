use std::io;

use cot_pi::CotError;
use thiserror::Error;

pub const EXIT_SCHEMA: i32 = 65;
pub const EXIT_NUMERICAL: i32 = 70;
pub const EXIT_IO: i32 = 74;
pub const EXIT_CONFIG: i32 = 78;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] CotError),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Schema(_) | HarnessError::Row { .. } => EXIT_SCHEMA,
            HarnessError::Config(_) => EXIT_CONFIG,
            HarnessError::Core(CotError::Input(_)) => EXIT_SCHEMA,
            HarnessError::Core(CotError::Config(_)) => EXIT_CONFIG,
            HarnessError::Core(CotError::Numerical(_)) => EXIT_NUMERICAL,
            HarnessError::Io(_) => EXIT_IO,
            HarnessError::Csv(e) => match e.kind() {
                csv::ErrorKind::Io(_) => EXIT_IO,
                _ => EXIT_SCHEMA,
            },
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(HarnessError::Config(msg.into()))
}
