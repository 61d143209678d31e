//! Dense `f64` tensors and a tape-based reverse-mode differentiator.

mod checkpoint;
mod gradcheck;
mod graph;
mod param;
#[allow(clippy::module_inception)]
mod tensor;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointError};
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{broadcast_pair, sigmoid, softplus, BinaryOp, CustomOp, Graph, NodeId, ReduceOp, UnaryOp, LOG_FLOOR};
pub use param::{ParamId, ParamStore, Parameter};
pub use tensor::{broadcast_shapes, Tensor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("shapes {0:?} and {1:?} are not compatible")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
    #[error("axis {axis} out of range for rank {rank}")]
    AxisOutOfRange { axis: usize, rank: usize },
    #[error("index {index} out of range for size {size}")]
    IndexOutOfRange { index: usize, size: usize },
    #[error("backward root must be a scalar, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("node {0} is not on this tape")]
    DetachedNode(usize),
    #[error("invalid shape {0:?}")]
    InvalidShape(Vec<usize>),
    /// Failure reported by a caller-supplied graph builder.
    #[error("{0}")]
    Builder(String),
}
