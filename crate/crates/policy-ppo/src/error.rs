use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("depth scan has {found} values, expected {expected}")]
    BadDepthLen { expected: usize, found: usize },
    #[error("feature vector has {found} values, expected {expected}")]
    BadFeatLen { expected: usize, found: usize },
    #[error("hidden state has {found} values, expected {expected}")]
    BadHiddenLen { expected: usize, found: usize },
    #[error("lookahead feature has {found} values, expected {expected}")]
    BadLookaheadLen { expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{name} has {found} entries, expected {expected}")]
    LengthMismatch { name: &'static str, expected: usize, found: usize },
    #[error("rollout buffer already holds {len} steps for env {env}")]
    BufferFull { env: usize, len: usize },
    #[error("env {env} has {len} of {expected} steps, cannot seal")]
    BufferShort { env: usize, len: usize, expected: usize },
    #[error("rollout must be sealed before the update")]
    Unsealed,
    #[error("reward total does not equal the sum of its terms")]
    RewardAssembly,
    #[error("rollout is already sealed")]
    AlreadySealed,
    #[error("minibatch of {len} samples cannot be split {parts} ways")]
    BadShardSplit { len: usize, parts: usize },
    #[error("config: {0}")]
    BadConfig(String),
    #[error("checkpoint is missing parameter {0:?}")]
    MissingParam(String),
    #[error(transparent)]
    Grad(#[from] grad_core::GradError),
    #[error(transparent)]
    Wm(#[from] world_model::WmError),
    #[error(transparent)]
    Sim(#[from] socialnav_sim::SimError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PolicyError>;
