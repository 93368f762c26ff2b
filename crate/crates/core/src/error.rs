use thiserror::Error;

/// Errors raised by the simulator, the circuit layers and the translation model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("gate construction error: {0}")]
    Construction(String),
    #[error("wiring error: {0}")]
    Wiring(String),
    #[error("shape error: expected {expected}, got {actual} ({what})")]
    Shape {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("differentiation error: {0}")]
    Differentiation(String),
    #[error("training error: non-finite gradient at parameter {index}")]
    NonFiniteGradient { index: usize },
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("architecture error: {0}")]
    Architecture(String),
    #[error("attention error: {0}")]
    Attention(String),
    #[error("vocabulary error: {0}")]
    Vocabulary(String),
    #[error("decoding error: {0}")]
    Decoding(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("data error: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Shape {
            what,
            expected,
            actual,
        })
    }
}
