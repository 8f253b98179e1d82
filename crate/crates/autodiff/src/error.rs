use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{primitive}: incompatible input shapes {shapes:?}")]
    ShapeMismatch {
        primitive: &'static str,
        shapes: Vec<[usize; 2]>,
    },

    #[error("{primitive}: expected {expected} inputs, got {got}")]
    Arity {
        primitive: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("backward requires a scalar (1x1) loss, got shape {0:?}")]
    NonScalarLoss([usize; 2]),

    #[error("node {0} does not belong to this graph")]
    UnknownNode(usize),

    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),

    #[error("no parameter entry named `{0}`")]
    UnknownEntry(String),

    #[error("parameter `{name}`: expected shape {expected:?}, got {got:?}")]
    ParamShape {
        name: String,
        expected: [usize; 2],
        got: [usize; 2],
    },
}

pub type Result<T> = std::result::Result<T, AutodiffError>;
