//! Observation features and the per-env latent context fed to the world
//! model's lookahead.

use socialnav_sim::{Observation, Scene, PREV_ACTION_NONE};
use world_model::{TransitionModel, ACTION_COUNT, EMBED_DIM, LATENT_LEN, MAX_CONTEXT_FRAMES, PATCH_COUNT};

use crate::error::{PolicyError, Result};
use crate::{AUX_LEN, LOOKAHEAD_DIM};

/// Non-depth observation features: previous-action one-hot (all zeros at
/// episode start), goal polar scaled to roughly unit range, pose normalized
/// by the scene extents and pi.
pub fn aux_features(obs: &Observation, scene: &Scene) -> [f64; AUX_LEN] {
    let mut f = [0.0; AUX_LEN];
    if obs.prev_action != PREV_ACTION_NONE {
        f[obs.prev_action as usize] = 1.0;
    }
    f[4] = obs.goal_polar.0 / 10.0;
    f[5] = obs.goal_polar.1 / std::f64::consts::PI;
    f[6] = obs.pose.0 / scene.width;
    f[7] = obs.pose.1 / scene.height;
    f[8] = obs.pose.2 / std::f64::consts::PI;
    f
}

/// Sliding window of the last few observed frame latents plus the actions
/// taken between them, in the layout `TransitionModel::lookahead` expects.
#[derive(Clone, Default)]
pub struct LatentContext {
    frames: Vec<Vec<f64>>,
    actions: Vec<u8>,
}

impl LatentContext {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops everything and installs the first frame of a fresh episode.
    pub fn reset(&mut self, z0: Vec<f64>) {
        self.frames.clear();
        self.actions.clear();
        self.frames.push(z0);
    }

    /// Appends the frame that followed `action`, evicting the oldest frame
    /// once the window is full.
    pub fn push(&mut self, action: u8, z_next: Vec<f64>) {
        self.frames.push(z_next);
        self.actions.push(action);
        if self.frames.len() > MAX_CONTEXT_FRAMES {
            self.frames.remove(0);
            self.actions.remove(0);
        }
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn actions(&self) -> &[u8] {
        &self.actions
    }
}

/// Imagined next latent for every candidate action from the current context.
pub fn imagine_branches(
    tm: &TransitionModel,
    ctx: &LatentContext,
) -> Result<[Vec<f64>; ACTION_COUNT]> {
    Ok(tm.lookahead(&ctx.frames, &ctx.actions)?)
}

/// Mean-pools each branch latent over its patches and concatenates the pools
/// in action-id order. The result is a plain value vector; the policy graph
/// takes it in as a constant, so no gradient can reach the world model.
pub fn pool_branches(branches: &[Vec<f64>; ACTION_COUNT]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(LOOKAHEAD_DIM);
    for z in branches {
        if z.len() != LATENT_LEN {
            return Err(PolicyError::Wm(world_model::WmError::BadLatentLen {
                expected: LATENT_LEN,
                found: z.len(),
            }));
        }
        for j in 0..EMBED_DIM {
            let mut s = 0.0;
            for p in 0..PATCH_COUNT {
                s += z[p * EMBED_DIM + j];
            }
            out.push(s / PATCH_COUNT as f64);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn context_window_holds_the_newest_frames() {
        let mut ctx = LatentContext::new();
        ctx.reset(vec![0.0; LATENT_LEN]);
        for i in 0..7u8 {
            ctx.push(i % 4, vec![f64::from(i) + 1.0; LATENT_LEN]);
        }
        assert_eq!(ctx.frames().len(), MAX_CONTEXT_FRAMES);
        assert_eq!(ctx.actions().len(), MAX_CONTEXT_FRAMES - 1);
        // newest frame is the last push, oldest two fell off
        assert_eq!(ctx.frames()[MAX_CONTEXT_FRAMES - 1][0], 7.0);
        assert_eq!(ctx.frames()[0][0], 3.0);
        assert_eq!(ctx.actions(), &[3, 0, 1, 2]);
    }

    #[test]
    fn pooling_averages_each_patch_column() {
        // branch where patch p holds the constant p, so every pooled
        // coordinate is the mean of 0..8
        let mut z = vec![0.0; LATENT_LEN];
        for p in 0..PATCH_COUNT {
            for j in 0..EMBED_DIM {
                z[p * EMBED_DIM + j] = p as f64;
            }
        }
        let branches = [z.clone(), z.clone(), z.clone(), vec![1.0; LATENT_LEN]];
        let pooled = pool_branches(&branches).unwrap();
        assert_eq!(pooled.len(), LOOKAHEAD_DIM);
        let want = (0..PATCH_COUNT).sum::<usize>() as f64 / PATCH_COUNT as f64;
        assert!((pooled[0] - want).abs() < 1e-12);
        assert!((pooled[EMBED_DIM] - want).abs() < 1e-12);
        assert!((pooled[3 * EMBED_DIM + 5] - 1.0).abs() < 1e-12);
    }
}
