use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("optimizer error: non-finite gradient in parameter `{0}`")]
    Optimizer(String),
    #[error("gradient check error: {0}")]
    Check(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("initialization error: {0}")]
    Init(String),
    #[error("consistency error: {0}")]
    Consistency(String),
    #[error("schedule error: {0}")]
    Schedule(String),
    #[error("size error: {0}")]
    Size(String),
    #[error("out of range: {0}")]
    Range(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("non-finite {component} at step {step}")]
    NonFinite { step: usize, component: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}
