//! Training batches assembled from replay windows: 5 encoded context frames
//! with their actions, plus targets taken from the window's final record.

use replay_store::{TransitionRecord, FUTURE_STEPS, TRACKED_HUMANS};

use crate::encoder::FrozenEncoder;
use crate::error::{Result, WmError};
use crate::{LATENT_LEN, MAX_CONTEXT_FRAMES, WINDOW_LEN};

pub struct WMBatch {
    pub b: usize,
    /// [B, 5, P, D] encoded context frames, oldest first.
    pub z_ctx: Vec<f64>,
    /// [B, 5] action taken at each context frame.
    pub actions: Vec<u8>,
    /// [B, P, D] encoded target frame.
    pub z_target: Vec<f64>,
    /// [B, 64] ground-truth depth of the target frame.
    pub target_depth: Vec<f64>,
    /// [B, N_h, T, 2] human positions in the target frame's robot coordinates.
    pub target_traj: Vec<f64>,
    /// [B, N_h] 1.0 where the trajectory slot tracks a real human.
    pub traj_mask: Vec<f64>,
    /// [B] task reward received on the transition into the target frame.
    pub target_reward: Vec<f64>,
}

pub fn assemble_batch(enc: &FrozenEncoder, windows: &[&[TransitionRecord]]) -> Result<WMBatch> {
    if windows.is_empty() {
        return Err(WmError::EmptyBatch);
    }
    let b = windows.len();
    let mut out = WMBatch {
        b,
        z_ctx: Vec::with_capacity(b * MAX_CONTEXT_FRAMES * LATENT_LEN),
        actions: Vec::with_capacity(b * MAX_CONTEXT_FRAMES),
        z_target: Vec::with_capacity(b * LATENT_LEN),
        target_depth: Vec::with_capacity(b * 64),
        target_traj: Vec::with_capacity(b * TRACKED_HUMANS * FUTURE_STEPS * 2),
        traj_mask: Vec::with_capacity(b * TRACKED_HUMANS),
        target_reward: Vec::with_capacity(b),
    };
    for w in windows {
        if w.len() != WINDOW_LEN {
            return Err(WmError::WindowLen { expected: WINDOW_LEN, found: w.len() });
        }
        for rec in &w[..MAX_CONTEXT_FRAMES] {
            out.z_ctx.extend_from_slice(&enc.encode_scan(&rec.depth));
            out.actions.push(rec.action);
        }
        let target = &w[WINDOW_LEN - 1];
        out.z_target.extend_from_slice(&enc.encode_scan(&target.depth));
        out.target_depth.extend(target.depth.iter().map(|&v| v as f64));
        for h in 0..TRACKED_HUMANS {
            for k in 0..FUTURE_STEPS {
                out.target_traj.push(target.human_futures[h][k][0] as f64);
                out.target_traj.push(target.human_futures[h][k][1] as f64);
            }
            out.traj_mask.push(if target.validity >> h & 1 == 1 { 1.0 } else { 0.0 });
        }
        // the last context record's action causes the transition being
        // predicted, and its stored reward is what that transition paid
        out.target_reward.push(w[MAX_CONTEXT_FRAMES - 1].reward_task as f64);
    }
    Ok(out)
}
