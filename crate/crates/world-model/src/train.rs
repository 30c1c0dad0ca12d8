//! Training loop for the transition model and decoder heads. The encoder is
//! frozen; only the two trainable maps get Adam updates, with one shared
//! global gradient-norm clip across both.

use std::path::Path;

use grad_core::seeding::{indexed_seed, stream_seed};
use grad_core::{OptimizerState, ParamMap};
use replay_store::{ReplayStore, Split};
use serde::{Deserialize, Serialize};

use crate::batch::assemble_batch;
use crate::error::{Result, WmError};
use crate::eval::{evaluate_wm, WMEvalReport};
use crate::loss::{wm_loss, LossWeights, WmLossParts};
use crate::model::WorldModel;
use crate::WINDOW_LEN;

/// Consecutive all-invalid batch draws tolerated before giving up. Hitting
/// this means the store has essentially no tracked humans.
const MAX_INVALID_REDRAWS: usize = 25;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WmConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub grad_clip: f64,
    /// Held-out evaluation cadence in steps; 0 disables it.
    pub eval_every: u64,
    pub eval_windows: usize,
    /// Minimum training windows required to start at all.
    pub min_windows: usize,
    pub seed: u64,
}

impl Default for WmConfig {
    fn default() -> Self {
        WmConfig {
            steps: 2000,
            batch_size: 32,
            lr: 3e-4,
            grad_clip: 1.0,
            eval_every: 500,
            eval_windows: 200,
            min_windows: 64,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LossRow {
    pub step: u64,
    pub parts: WmLossParts,
}

pub struct WmTrainOutput {
    pub curve: Vec<LossRow>,
    pub evals: Vec<(u64, WMEvalReport)>,
    /// All-invalid batches that were redrawn rather than trained on.
    pub skipped_draws: u64,
}

/// Scales gradients across several maps so their combined L2 norm is at most
/// `max_norm`. Returns the pre-clip norm. `grad_core::clip_grad_norm` does
/// the same for one map; here transition and heads clip as one set.
pub fn clip_grad_norm_joint(maps: &mut [&mut ParamMap], max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for m in maps.iter() {
        for (_, t) in m.iter() {
            if let Some(g) = t.grad() {
                for &v in g {
                    sq += v * v;
                }
            }
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for m in maps.iter_mut() {
            for (_, t) in m.iter_mut() {
                if let Some(g) = t.grad_mut() {
                    g.iter_mut().for_each(|v| *v *= scale);
                }
            }
        }
    }
    norm
}

pub fn train_wm(
    model: &mut WorldModel,
    store: &ReplayStore,
    cfg: &WmConfig,
) -> Result<WmTrainOutput> {
    let have = store.window_count(Split::Train, WINDOW_LEN);
    if have < cfg.min_windows {
        return Err(WmError::InsufficientData { have, need: cfg.min_windows });
    }
    let weights = LossWeights::default();
    let mut opt_tm = OptimizerState::adam(cfg.lr);
    let mut opt_dec = OptimizerState::adam(cfg.lr);
    let batch_seed = stream_seed(cfg.seed, "wm-batches");
    let eval_seed = stream_seed(cfg.seed, "wm-eval");
    let eval_ready = store.window_count(Split::Heldout, WINDOW_LEN) > 0;

    let mut draw = 0u64;
    let mut skipped_draws = 0u64;
    let mut curve = Vec::with_capacity(cfg.steps as usize);
    let mut evals = Vec::new();
    for step in 0..cfg.steps {
        let mut batch = None;
        for _ in 0..MAX_INVALID_REDRAWS {
            let windows =
                store.sample_windows(Split::Train, cfg.batch_size, WINDOW_LEN, indexed_seed(batch_seed, draw))?;
            draw += 1;
            let cand = assemble_batch(&model.encoder, &windows)?;
            if cand.traj_mask.iter().any(|&m| m > 0.0) {
                batch = Some(cand);
                break;
            }
            skipped_draws += 1;
        }
        let batch = batch.ok_or(WmError::AllInvalidTraj)?;

        model.transition.params_mut().zero_grads();
        model.heads.params_mut().zero_grads();
        let parts = wm_loss(&mut model.transition, &mut model.heads, &batch, weights, true)?;
        clip_grad_norm_joint(
            &mut [model.transition.params_mut(), model.heads.params_mut()],
            cfg.grad_clip,
        );
        opt_tm.step(model.transition.params_mut())?;
        opt_dec.step(model.heads.params_mut())?;
        curve.push(LossRow { step, parts });

        if cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0 && eval_ready {
            let report = evaluate_wm(
                model,
                store,
                Split::Heldout,
                cfg.eval_windows,
                indexed_seed(eval_seed, step + 1),
            )?;
            evals.push((step + 1, report));
        }
    }
    Ok(WmTrainOutput { curve, evals, skipped_draws })
}

pub fn write_loss_csv(path: &Path, rows: &[LossRow]) -> Result<()> {
    let mut s = String::from("step,total,l_f,l_d,l_xi,l_r\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.step, r.parts.total, r.parts.latent, r.parts.depth, r.parts.traj, r.parts.reward
        ));
    }
    std::fs::write(path, s)?;
    Ok(())
}
