use thiserror::Error;

#[derive(Debug, Error)]
pub enum WmError {
    #[error("depth scan has {found} values, expected {expected}")]
    BadDepthLen { expected: usize, found: usize },
    #[error("context of {frames} frames (must be 1..={max})", max = crate::MAX_CONTEXT_FRAMES)]
    BadContext { frames: usize },
    #[error("{actions} actions for {frames} context frames")]
    ActionCount { frames: usize, actions: usize },
    #[error("action id {value} out of range")]
    BadAction { value: u8 },
    #[error("latent has {found} values, expected {expected}")]
    BadLatentLen { expected: usize, found: usize },
    #[error("training window has {found} records, expected {expected}")]
    WindowLen { expected: usize, found: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("no imagination steps requested")]
    EmptyPlan,
    #[error("every trajectory slot in the batch is invalid")]
    AllInvalidTraj,
    #[error("replay has {have} training windows, need at least {need}")]
    InsufficientData { have: usize, need: usize },
    #[error("held-out split has no complete windows")]
    EmptyHeldout,
    #[error("checkpoint is missing parameter {0:?}")]
    MissingParam(String),
    #[error(transparent)]
    Grad(#[from] grad_core::GradError),
    #[error(transparent)]
    Replay(#[from] replay_store::ReplayError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, WmError>;
