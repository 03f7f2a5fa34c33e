use alloc::string::String;

use crate::tensor::Shape;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension error in {op}: {left} vs {right}")]
    Dimension {
        op: &'static str,
        left: Shape,
        right: Shape,
    },
    #[error("degenerate mask: every position of a {len}-slot softmax is masked")]
    DegenerateMask { len: usize },
    #[error("token id {id} out of range for vocabulary of size {size}")]
    Vocabulary { id: u32, size: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("checkpoint tensor `{name}`: {msg}")]
    Checkpoint { name: String, msg: String },
}
