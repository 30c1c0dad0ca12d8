//! Recurrent actor-critic trained with clipped PPO, with two hooks into the
//! learned world model: a lookahead feature built from the imagined next
//! latent of every candidate action, and a reward shaping term that penalizes
//! imagined proximity to tracked humans. Both hooks read the model; nothing
//! here ever writes to it.

mod buffer;
mod error;
mod features;
mod gae;
mod net;
mod reward;
mod train;
mod update;

pub use buffer::{RolloutBuffer, SealedRollout, StepSample};
pub use error::{PolicyError, Result};
pub use features::{aux_features, imagine_branches, pool_branches, LatentContext};
pub use gae::gae;
pub use net::{forward_graph, ActMode, Decision, ForwardVars, PolicyNet};
pub use reward::{shape_reward, ShapingConfig};
pub use train::{
    evaluate_policy, train_policy, write_curve_csv, AblationFlags, CurveRow, PolicyTrainOutput,
    RunBudget, SimSetup,
};
pub use update::{ppo_update, PPOConfig, UpdateStats};

/// Rays in one depth scan, matching the world model's patch grid.
pub const RAY_COUNT: usize = world_model::PATCH_COUNT * world_model::PATCH_WIDTH;
/// Auxiliary observation features: previous-action one-hot (4), goal range
/// and bearing (2), normalized pose (3).
pub const AUX_LEN: usize = 9;
/// Width of the recurrent state.
pub const HIDDEN_DIM: usize = 64;
/// Lookahead feature width: one pooled imagined latent per candidate action.
pub const LOOKAHEAD_DIM: usize = world_model::ACTION_COUNT * world_model::EMBED_DIM;
