//! Clipped-surrogate PPO update over a sealed rollout.
//!
//! Minibatches are contiguous slices of the env-major buffer, replayed in
//! stored order from each step's recorded entry hidden state. A minibatch can
//! be split into K shards whose gradients are averaged before the single
//! optimizer step; the sharded and unsharded paths optimize the same mean
//! objective, so K only reassociates floating-point sums.

use grad_core::{clip_grad_norm, Graph, OptimizerState};
use serde::{Deserialize, Serialize};

use crate::buffer::RolloutBuffer;
use crate::error::{PolicyError, Result};
use crate::net::{forward_graph, PolicyNet};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PPOConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_eps: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub lr: f64,
    pub grad_clip: f64,
    pub n_envs: usize,
    pub rollout_len: usize,
    /// Gradient shards per minibatch, the stand-in for distributed workers.
    pub shards: usize,
}

impl Default for PPOConfig {
    fn default() -> Self {
        PPOConfig {
            gamma: 0.99,
            lambda: 0.95,
            clip_eps: 0.2,
            epochs: 4,
            minibatches: 4,
            value_coef: 0.5,
            entropy_coef: 0.01,
            lr: 2.5e-4,
            grad_clip: 0.5,
            n_envs: 8,
            rollout_len: 128,
            shards: 1,
        }
    }
}

/// Mean losses across every optimizer step of the update, plus how far the
/// first minibatch's importance ratios strayed from 1 before any step.
#[derive(Clone, Copy, Debug)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub first_ratio_max_dev: f64,
}

pub fn ppo_update(
    net: &mut PolicyNet,
    buf: &RolloutBuffer,
    cfg: &PPOConfig,
    opt: &mut OptimizerState,
) -> Result<UpdateStats> {
    let sealed = buf.sealed()?;
    let n = buf.len();
    if cfg.minibatches == 0 || cfg.shards == 0 || cfg.epochs == 0 {
        return Err(PolicyError::BadConfig("epochs, minibatches and shards must be positive".into()));
    }
    if n % cfg.minibatches != 0 {
        return Err(PolicyError::BadShardSplit { len: n, parts: cfg.minibatches });
    }
    let mb_len = n / cfg.minibatches;
    if mb_len % cfg.shards != 0 {
        return Err(PolicyError::BadShardSplit { len: mb_len, parts: cfg.shards });
    }
    let shard_len = mb_len / cfg.shards;

    // advantages are normalized once over the whole rollout
    let mean = sealed.advantages.iter().sum::<f64>() / n as f64;
    let var = sealed.advantages.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n as f64;
    let inv_std = 1.0 / (var.sqrt() + 1e-8);
    let adv: Vec<f64> = sealed.advantages.iter().map(|a| (a - mean) * inv_std).collect();

    let mut policy_acc = 0.0;
    let mut value_acc = 0.0;
    let mut entropy_acc = 0.0;
    let mut first_ratio_dev = 0.0;
    for epoch in 0..cfg.epochs {
        for mb in 0..cfg.minibatches {
            let start = mb * mb_len;
            net.params_mut().zero_grads();
            for shard in 0..cfg.shards {
                let lo = start + shard * shard_len;
                let sums = shard_pass(
                    net,
                    buf,
                    &adv[lo..lo + shard_len],
                    &sealed.returns[lo..lo + shard_len],
                    lo,
                    shard_len,
                    cfg,
                    epoch == 0 && mb == 0,
                    &mut first_ratio_dev,
                )?;
                policy_acc += sums.0;
                value_acc += sums.1;
                entropy_acc += sums.2;
            }
            // sums over shards become the minibatch mean objective
            net.params_mut().scale_grads(1.0 / mb_len as f64);
            clip_grad_norm(net.params_mut(), cfg.grad_clip);
            opt.step(net.params_mut())?;
        }
    }
    let steps = (cfg.epochs * n) as f64;
    Ok(UpdateStats {
        policy_loss: policy_acc / steps,
        value_loss: value_acc / steps,
        entropy: entropy_acc / steps,
        first_ratio_max_dev: first_ratio_dev,
    })
}

/// Forward, loss, and backward over one shard slice. Returns the shard's
/// summed policy, value, and entropy terms; gradients accumulate into the
/// param map via harvest.
#[allow(clippy::too_many_arguments)]
fn shard_pass(
    net: &mut PolicyNet,
    buf: &RolloutBuffer,
    adv: &[f64],
    returns: &[f64],
    lo: usize,
    rows: usize,
    cfg: &PPOConfig,
    track_ratio: bool,
    ratio_dev: &mut f64,
) -> Result<(f64, f64, f64)> {
    let mut depth = Vec::with_capacity(rows * crate::RAY_COUNT);
    let mut aux = Vec::with_capacity(rows * crate::AUX_LEN);
    let mut hidden = Vec::with_capacity(rows * crate::HIDDEN_DIM);
    let mut look = Vec::with_capacity(rows * crate::LOOKAHEAD_DIM);
    let mut actions = Vec::with_capacity(rows);
    let mut logp_old = Vec::with_capacity(rows);
    for i in lo..lo + rows {
        let s = buf.flat(i);
        depth.extend_from_slice(&s.depth);
        aux.extend_from_slice(&s.aux);
        hidden.extend_from_slice(&s.hidden);
        look.extend_from_slice(&s.lookahead);
        actions.push(s.action as usize);
        logp_old.push(s.log_prob);
    }

    let mut g = Graph::new();
    let bound = net.params().bind(&mut g);
    let fv = forward_graph(&mut g, &bound, rows, &depth, &aux, &hidden, &look)?;
    let lp_new = g.categorical_logprob(fv.logits, &actions)?;
    let lp_old = g.constant_from(vec![rows], logp_old)?;
    let dlp = g.sub(lp_new, lp_old)?;
    let ratio = g.exp(dlp);
    if track_ratio {
        for r in g.value(ratio) {
            *ratio_dev = ratio_dev.max((r - 1.0).abs());
        }
    }
    let adv_c = g.constant_from(vec![rows], adv.to_vec())?;
    let s1 = g.mul(ratio, adv_c)?;
    let clipped = g.clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    let s2 = g.mul(clipped, adv_c)?;
    let surr = g.min2(s1, s2)?;
    let surr_sum = g.sum_all(surr);
    let policy_sum = g.scale(surr_sum, -1.0);

    let ret_c = g.constant_from(vec![rows], returns.to_vec())?;
    let vdiff = g.sub(fv.value, ret_c)?;
    let vsq = g.mul(vdiff, vdiff)?;
    let value_sum = g.sum_all(vsq);

    let ent = g.entropy(fv.logits)?;
    let ent_sum = g.sum_all(ent);

    let v_term = g.scale(value_sum, cfg.value_coef);
    let e_term = g.scale(ent_sum, -cfg.entropy_coef);
    let partial = g.add(policy_sum, v_term)?;
    let total = g.add(partial, e_term)?;
    g.backward(total)?;
    net.params_mut().harvest(&g, &bound)?;
    Ok((g.value(policy_sum)[0], g.value(value_sum)[0], g.value(ent_sum)[0]))
}
