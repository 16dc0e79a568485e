use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("row {row} is fully masked")]
    FullyMasked { row: usize },
    #[error("index {index} out of range (size {size})")]
    Index { index: usize, size: usize },
    #[error("loss must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("tape is not topologically ordered: node {node} reads node {input}")]
    Cycle { node: usize, input: usize },
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("bad magic bytes")]
    Magic,
    #[error("unsupported format version {0}")]
    Version(u32),
    #[error("unsupported dtype {0}")]
    Dtype(String),
    #[error("tensor {name}: {reason}")]
    Tensor { name: String, reason: String },
}
