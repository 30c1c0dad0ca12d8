//! Combined world-model objective: next-latent consistency plus decoder
//! reconstruction terms. Decoder heads are supervised on the true target
//! latent, so transition and decoder gradients never mix.

use grad_core::losses::{masked_mse, mse};
use grad_core::{GradError, Graph, Var};
use replay_store::{FUTURE_STEPS, TRACKED_HUMANS};

use crate::batch::WMBatch;
use crate::error::{Result, WmError};
use crate::heads::{decode_graph, DecoderHeads};
use crate::transition::{transformer_forward, TransitionModel};
use crate::{VarSource, EMBED_DIM, MAX_CONTEXT_FRAMES, PATCH_COUNT};

#[derive(Clone, Copy, Debug)]
pub struct LossWeights {
    pub latent: f64,
    pub traj: f64,
    pub reward: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        // depth carries implicit weight 1.0; these keep the decoder terms
        // from drowning latent consistency at initialization
        LossWeights { latent: 1.0, traj: 0.5, reward: 0.1 }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct WmLossParts {
    pub total: f64,
    pub latent: f64,
    pub depth: f64,
    pub traj: f64,
    pub reward: f64,
}

pub struct WmLossVars {
    pub total: Var,
    pub latent: Var,
    pub depth: Var,
    pub traj: Var,
    pub reward: Var,
}

/// Builds the full objective on `g`. `tm` and `dec` resolve transition and
/// decoder parameter names respectively.
pub fn wm_loss_graph(
    g: &mut Graph,
    tm: &impl VarSource,
    dec: &impl VarSource,
    batch: &WMBatch,
    w: LossWeights,
) -> Result<WmLossVars> {
    let b = batch.b;
    let z_ctx = g.constant_from(
        vec![b, MAX_CONTEXT_FRAMES, PATCH_COUNT, EMBED_DIM],
        batch.z_ctx.clone(),
    )?;
    let pred = transformer_forward(g, tm, z_ctx, &batch.actions, b, MAX_CONTEXT_FRAMES)?;
    let z_target = g.constant_from(vec![b, PATCH_COUNT, EMBED_DIM], batch.z_target.clone())?;
    let l_f = mse(g, pred, z_target)?;

    // decoders read the true target latent, not the prediction
    let z_true = g.constant_from(vec![b, PATCH_COUNT, EMBED_DIM], batch.z_target.clone())?;
    let (d_hat, traj_hat, r_hat) = decode_graph(g, dec, z_true, b)?;

    let d_tar = g.constant_from(vec![b, 64], batch.target_depth.clone())?;
    let l_d = mse(g, d_hat, d_tar)?;

    let t_tar = g.constant_from(
        vec![b, TRACKED_HUMANS, FUTURE_STEPS, 2],
        batch.target_traj.clone(),
    )?;
    // expand the per-slot mask to per-element: broadcast in mul is cyclic,
    // not row-wise
    let per_slot = FUTURE_STEPS * 2;
    let mut mask = Vec::with_capacity(batch.traj_mask.len() * per_slot);
    for &m in &batch.traj_mask {
        mask.extend(std::iter::repeat(m).take(per_slot));
    }
    let mask = g.constant_from(vec![b, TRACKED_HUMANS, FUTURE_STEPS, 2], mask)?;
    let l_xi = match masked_mse(g, traj_hat, t_tar, mask) {
        Err(GradError::EmptyMask) => return Err(WmError::AllInvalidTraj),
        other => other?,
    };

    let r_tar = g.constant_from(vec![b], batch.target_reward.clone())?;
    let l_r = mse(g, r_hat, r_tar)?;

    let weighted_f = g.scale(l_f, w.latent);
    let sum = g.add(weighted_f, l_d)?;
    let weighted_xi = g.scale(l_xi, w.traj);
    let sum = g.add(sum, weighted_xi)?;
    let weighted_r = g.scale(l_r, w.reward);
    let total = g.add(sum, weighted_r)?;

    Ok(WmLossVars { total, latent: l_f, depth: l_d, traj: l_xi, reward: l_r })
}

/// Evaluates the objective on one batch. With `accumulate_grads` the full
/// backward pass runs and gradients are added into both parameter maps
/// (callers zero them first).
pub fn wm_loss(
    transition: &mut TransitionModel,
    heads: &mut DecoderHeads,
    batch: &WMBatch,
    w: LossWeights,
    accumulate_grads: bool,
) -> Result<WmLossParts> {
    let mut g = Graph::new();
    let (tm_bound, dec_bound) = if accumulate_grads {
        (transition.params().bind(&mut g), heads.params().bind(&mut g))
    } else {
        (transition.params().bind_frozen(&mut g), heads.params().bind_frozen(&mut g))
    };
    let vars = wm_loss_graph(&mut g, &tm_bound, &dec_bound, batch, w)?;
    let parts = WmLossParts {
        total: g.value(vars.total)[0],
        latent: g.value(vars.latent)[0],
        depth: g.value(vars.depth)[0],
        traj: g.value(vars.traj)[0],
        reward: g.value(vars.reward)[0],
    };
    if accumulate_grads {
        g.backward(vars.total)?;
        transition.params_mut().harvest(&g, &tm_bound)?;
        heads.params_mut().harvest(&g, &dec_bound)?;
    }
    Ok(parts)
}
