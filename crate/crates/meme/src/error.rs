use thiserror::Error;

#[derive(Debug, Error)]
pub enum MemeError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl MemeError {
    pub fn shape(msg: impl Into<String>) -> Self {
        MemeError::Shape(msg.into())
    }

    /// CLI process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            MemeError::Config(_) | MemeError::Shape(_) | MemeError::Domain(_) => 2,
            MemeError::Data(_) => 3,
            MemeError::Numerical(_) => 4,
            MemeError::Io(_) | MemeError::Serde(_) => 3,
        }
    }
}
