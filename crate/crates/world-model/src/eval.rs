//! Held-out evaluation for the world model: latent cosine similarity, depth
//! RMSE, and trajectory ADE/FDE, plus the stay-put trajectory baseline.
//!
//! Both `evaluate_wm` and `stay_put_ade` sample windows with the seed they
//! are given, so calling them with the same split, count, and seed scores
//! the model and the baseline on identical windows.

use std::path::Path;

use grad_core::kernels::cosine_similarity;
use replay_store::{ReplayStore, Split, TransitionRecord, FUTURE_STEPS, TRACKED_HUMANS};

use crate::error::{Result, WmError};
use crate::model::WorldModel;
use crate::{MAX_CONTEXT_FRAMES, WINDOW_LEN};

#[derive(Clone, Copy, Debug, Default)]
pub struct WMEvalReport {
    /// Mean cosine similarity between predicted and encoded next latents.
    pub cos_sim: f64,
    /// RMSE of the depth decode of the predicted latent, over all rays of
    /// all evaluated windows.
    pub depth_rmse: f64,
    /// Mean displacement error of decoded human futures over valid
    /// (human, step) pairs.
    pub traj_ade: f64,
    /// Displacement error at the last future step only.
    pub traj_fde: f64,
}

fn sample<'a>(
    store: &'a ReplayStore,
    split: Split,
    count: usize,
    seed: u64,
) -> Result<Vec<&'a [TransitionRecord]>> {
    if store.window_count(split, WINDOW_LEN) == 0 {
        return Err(WmError::EmptyHeldout);
    }
    Ok(store.sample_windows(split, count, WINDOW_LEN, seed)?)
}

/// Runs the model over `count` sampled windows (with replacement) and
/// aggregates prediction quality. Trajectory metrics are averaged over valid
/// pairs only; a sample with no valid pairs at all reports 0.0 for both.
pub fn evaluate_wm(
    model: &WorldModel,
    store: &ReplayStore,
    split: Split,
    count: usize,
    seed: u64,
) -> Result<WMEvalReport> {
    let windows = sample(store, split, count, seed)?;
    let mut cos_sum = 0.0;
    let mut depth_sq = 0.0;
    let mut depth_n = 0usize;
    let mut ade_sum = 0.0;
    let mut fde_sum = 0.0;
    let mut pairs = 0usize;
    let mut fde_pairs = 0usize;
    for w in &windows {
        let ctx = &w[..MAX_CONTEXT_FRAMES];
        let target = &w[MAX_CONTEXT_FRAMES];
        let z_ctx: Vec<Vec<f64>> = ctx.iter().map(|r| model.encoder.encode_scan(&r.depth)).collect();
        let actions: Vec<u8> = ctx.iter().map(|r| r.action).collect();
        let z_hat = model.transition.predict_next(&z_ctx, &actions)?;
        let z_true = model.encoder.encode_scan(&target.depth);
        cos_sum += cosine_similarity(&z_hat, &z_true);

        let decoded = model.heads.decode(&z_hat)?;
        for (i, &d) in target.depth.iter().enumerate() {
            let e = decoded.depth[i] - d as f64;
            depth_sq += e * e;
        }
        depth_n += target.depth.len();

        for h in 0..TRACKED_HUMANS {
            if target.validity >> h & 1 == 0 {
                continue;
            }
            for k in 0..FUTURE_STEPS {
                let dx = decoded.traj[h][k][0] - target.human_futures[h][k][0] as f64;
                let dy = decoded.traj[h][k][1] - target.human_futures[h][k][1] as f64;
                let e = (dx * dx + dy * dy).sqrt();
                ade_sum += e;
                pairs += 1;
                if k == FUTURE_STEPS - 1 {
                    fde_sum += e;
                    fde_pairs += 1;
                }
            }
        }
    }
    let n = windows.len() as f64;
    Ok(WMEvalReport {
        cos_sim: cos_sum / n,
        depth_rmse: (depth_sq / depth_n as f64).sqrt(),
        traj_ade: if pairs == 0 { 0.0 } else { ade_sum / pairs as f64 },
        traj_fde: if fde_pairs == 0 { 0.0 } else { fde_sum / fde_pairs as f64 },
    })
}

fn rotate(x: f64, y: f64, c: f64, s: f64) -> (f64, f64) {
    (x * c - y * s, x * s + y * c)
}

/// Maps a point from the frame of `from` into the frame of `to`. Poses are
/// (x, y, heading) in world coordinates.
fn reframe(p: [f64; 2], from: &[f32; 3], to: &[f32; 3]) -> [f64; 2] {
    let (fx, fy, fh) = (from[0] as f64, from[1] as f64, from[2] as f64);
    let (tx, ty, th) = (to[0] as f64, to[1] as f64, to[2] as f64);
    let (wx, wy) = rotate(p[0], p[1], fh.cos(), fh.sin());
    let (wx, wy) = (wx + fx, wy + fy);
    let (dx, dy) = (wx - tx, wy - ty);
    let (lx, ly) = rotate(dx, dy, th.cos(), -th.sin());
    [lx, ly]
}

/// Trajectory baseline that predicts every tracked human stays where it was
/// last seen. The anchor is the human's position at the end of the context,
/// carried into the target frame; humans that were not tracked there fall
/// back to their position in the target record itself. Scored over exactly
/// the valid pairs `evaluate_wm` uses, so the two ADEs are comparable.
pub fn stay_put_ade(store: &ReplayStore, split: Split, count: usize, seed: u64) -> Result<f64> {
    let windows = sample(store, split, count, seed)?;
    let mut ade_sum = 0.0;
    let mut pairs = 0usize;
    for w in &windows {
        let last_ctx = &w[MAX_CONTEXT_FRAMES - 1];
        let target = &w[MAX_CONTEXT_FRAMES];
        for h in 0..TRACKED_HUMANS {
            if target.validity >> h & 1 == 0 {
                continue;
            }
            let anchor = if last_ctx.validity >> h & 1 == 1 {
                let p = last_ctx.human_futures[h][0];
                reframe([p[0] as f64, p[1] as f64], &last_ctx.pose, &target.pose)
            } else {
                let p = target.human_futures[h][0];
                [p[0] as f64, p[1] as f64]
            };
            for k in 0..FUTURE_STEPS {
                let dx = anchor[0] - target.human_futures[h][k][0] as f64;
                let dy = anchor[1] - target.human_futures[h][k][1] as f64;
                ade_sum += (dx * dx + dy * dy).sqrt();
                pairs += 1;
            }
        }
    }
    Ok(if pairs == 0 { 0.0 } else { ade_sum / pairs as f64 })
}

pub fn write_eval_csv(path: &Path, rows: &[(u64, WMEvalReport)]) -> Result<()> {
    let mut s = String::from("step,cos_sim,depth_rmse,traj_ade,traj_fde\n");
    for (step, r) in rows {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            step, r.cos_sim, r.depth_rmse, r.traj_ade, r.traj_fde
        ));
    }
    std::fs::write(path, s)?;
    Ok(())
}
