use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("expected a scalar output, got shape {0:?}")]
    NonScalarOutput(Vec<usize>),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("third-order differentiation is not supported (tape allows two nested passes)")]
    ThirdOrder,

    #[error("second-order differentiation through batch normalization is not supported")]
    SecondOrderThroughBatchNorm,

    #[error("dimension {dim} exceeds the dense cap of {cap}")]
    DimensionTooLarge { dim: usize, cap: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("serialization error: {0}")]
    Serialization(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
