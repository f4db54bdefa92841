use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter is outside its physical or numerical domain.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("insufficient resolution: {0}")]
    InsufficientResolution(String),

    #[error("insufficient statistics: {0}")]
    InsufficientStatistics(String),

    #[error("integration window outside histogram range: {0}")]
    WindowOutOfRange(String),

    #[error("cannot renormalize an all-zero amplitude profile")]
    ZeroProfile,

    #[error("model unidentifiable: {0}")]
    Unidentifiable(String),

    #[error("data rejected by model check: {0}")]
    ModelMismatch(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
