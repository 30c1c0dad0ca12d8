//! Action-conditioned latent world model over depth-patch tokens.
//!
//! A frozen orthogonal patch encoder turns each 64-ray depth scan into 8
//! patch embeddings. A small block-causal transformer predicts the next
//! frame's embeddings from up to 5 context frames, each carrying its action
//! as a 9th token. Decoder heads read depth, nearby-human trajectories, and
//! reward back out of a latent frame. Training runs on the grad-core tape;
//! acting and evaluation use a tape-free forward that matches the tape
//! bitwise.

pub mod batch;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod heads;
pub mod loss;
pub mod model;
pub mod train;
pub mod transition;

pub use batch::{assemble_batch, WMBatch};
pub use encoder::FrozenEncoder;
pub use error::{Result, WmError};
pub use eval::{evaluate_wm, stay_put_ade, write_eval_csv, WMEvalReport};
pub use heads::{DecodedFrame, DecoderHeads};
pub use loss::{wm_loss, wm_loss_graph, LossWeights, WmLossParts};
pub use model::WorldModel;
pub use train::{train_wm, write_loss_csv, LossRow, WmConfig, WmTrainOutput};
pub use transition::{frame_causal_mask, transformer_forward, transformer_states, TransitionModel};

// the decoder's trajectory head is shaped by the replay layout, so the two
// constants travel with DecodedFrame
pub use replay_store::{FUTURE_STEPS, TRACKED_HUMANS};

use grad_core::Var;

/// Depth patches per frame.
pub const PATCH_COUNT: usize = 8;
/// Rays per patch.
pub const PATCH_WIDTH: usize = 8;
/// Patch embedding width.
pub const EMBED_DIM: usize = 32;
/// Flattened latent frame length (PATCH_COUNT * EMBED_DIM).
pub const LATENT_LEN: usize = PATCH_COUNT * EMBED_DIM;
/// Most context frames the transition model accepts (H + 1).
pub const MAX_CONTEXT_FRAMES: usize = 5;
/// Records per training window: H + 1 context frames plus the target frame.
pub const WINDOW_LEN: usize = MAX_CONTEXT_FRAMES + 1;
/// Patch tokens plus one action token.
pub const TOKENS_PER_FRAME: usize = PATCH_COUNT + 1;
/// Discrete action vocabulary.
pub const ACTION_COUNT: usize = 4;

/// Name-to-Var lookup used by the graph builders, so tests can splice in
/// raw leaf tensors where training binds a ParamMap.
pub trait VarSource {
    fn pv(&self, name: &str) -> Var;
}

impl VarSource for grad_core::BoundParams {
    fn pv(&self, name: &str) -> Var {
        self.var(name)
    }
}

/// Plain name-indexed Var table.
pub struct VarTable(pub std::collections::HashMap<String, Var>);

impl VarSource for VarTable {
    fn pv(&self, name: &str) -> Var {
        *self.0.get(name).unwrap_or_else(|| panic!("no var named {name:?}"))
    }
}
