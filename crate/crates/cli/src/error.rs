use qedacvc_core::Error as CoreError;

use crate::checkpoint::CheckpointError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    /// 0 ok, 1 config, 2 data, 3 numerical, 4 verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) | CliError::Checkpoint(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Verification(_) => 4,
            CliError::Core(e) => match e {
                CoreError::Config(_)
                | CoreError::Construction(_)
                | CoreError::Wiring(_)
                | CoreError::Architecture(_)
                | CoreError::Vocabulary(_) => 1,
                CoreError::NonFiniteGradient { .. } | CoreError::Numerical(_) | CoreError::Differentiation(_) => 3,
                CoreError::Shape { .. }
                | CoreError::Attention(_)
                | CoreError::Decoding(_)
                | CoreError::Evaluation(_)
                | CoreError::Data(_) => 2,
            },
        }
    }
}

pub(crate) fn io_err(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}
