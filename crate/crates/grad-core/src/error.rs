use thiserror::Error;

#[derive(Debug, Error)]
pub enum GradError {
    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),
    #[error("inner dimension mismatch in matmul: {0:?} x {1:?}")]
    MatmulDims(Vec<usize>, Vec<usize>),
    #[error("shape {shape:?} does not hold {len} elements")]
    BadShape { shape: Vec<usize>, len: usize },
    #[error("softmax row {row} is fully masked")]
    FullyMaskedRow { row: usize },
    #[error("mask has no active entries")]
    EmptyMask,
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("parameter '{0}' has no gradient")]
    MissingGrad(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid axis {axis} for rank {rank}")]
    BadAxis { axis: usize, rank: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GradError>;
