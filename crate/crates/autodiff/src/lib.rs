//! Minimal dense-tensor engine with tape-based reverse-mode differentiation.
//!
//! Every value lives on a [`Graph`] as a node; ops append nodes in order, so
//! the tape is topologically sorted by construction and [`Graph::backward`]
//! walks it once in reverse. The op set is exactly what the builder model
//! needs: matrix products, 3D convolution, masked multi-head attention,
//! gated recurrence, layer normalization and the usual pointwise functions.

pub mod attention;
pub mod checkpoint;
pub mod conv;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod gru;
pub mod init;
pub mod optim;
pub mod params;
pub mod tensor;

pub use attention::{AttentionConfig, AttentionWeights, MultiHeadAttention};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use error::{CheckpointError, TensorError};
pub use graph::{Gradients, Graph, Mode, Var};
pub use gru::GruParams;
pub use optim::{adam_step, clip_global_norm, AdamConfig, AdamState};
pub use params::ParamStore;
pub use tensor::Tensor;

/// Additive bias applied to masked positions before normalization.
pub const MASK_BIAS: f64 = -1e9;

pub type Result<T, E = TensorError> = std::result::Result<T, E>;
