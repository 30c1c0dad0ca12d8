//! Decoder heads over a latent frame: per-patch depth reconstruction, and
//! trajectory/reward heads on the mean-pooled patch feature.

use grad_core::kernels;
use grad_core::seeding::{rng_from, stream_seed};
use grad_core::{Graph, ParamMap, Tensor, Var};
use replay_store::{FUTURE_STEPS, TRACKED_HUMANS};

use crate::error::{Result, WmError};
use crate::{VarSource, EMBED_DIM, LATENT_LEN, PATCH_COUNT};

const D: usize = EMBED_DIM;
const DEPTH_HIDDEN: usize = 64;
const TRAJ_HIDDEN: usize = 64;
const TRAJ_OUT: usize = TRACKED_HUMANS * FUTURE_STEPS * 2;
const REW_HIDDEN: usize = 32;
/// Rays reconstructed per patch.
const RAYS_PER_PATCH: usize = 8;

pub struct DecoderHeads {
    params: ParamMap,
}

/// Everything decoded from one latent frame.
pub struct DecodedFrame {
    pub depth: [f64; 64],
    /// [human][step] positions in the frame's robot coordinates, meters.
    pub traj: [[[f64; 2]; FUTURE_STEPS]; TRACKED_HUMANS],
    pub reward: f64,
}

impl DecoderHeads {
    pub fn new(seed: u64) -> Self {
        let mut rng = rng_from(stream_seed(seed, "decoder-heads"));
        let mut p = ParamMap::new();
        p.insert("dec.depth.w1", Tensor::fan_in_init(vec![D, DEPTH_HIDDEN], &mut rng).requires_grad(true));
        p.insert("dec.depth.b1", Tensor::zeros(vec![DEPTH_HIDDEN]).requires_grad(true));
        p.insert("dec.depth.w2", Tensor::fan_in_init(vec![DEPTH_HIDDEN, RAYS_PER_PATCH], &mut rng).requires_grad(true));
        p.insert("dec.depth.b2", Tensor::zeros(vec![RAYS_PER_PATCH]).requires_grad(true));
        p.insert("dec.traj.w1", Tensor::fan_in_init(vec![D, TRAJ_HIDDEN], &mut rng).requires_grad(true));
        p.insert("dec.traj.b1", Tensor::zeros(vec![TRAJ_HIDDEN]).requires_grad(true));
        p.insert("dec.traj.w2", Tensor::fan_in_init(vec![TRAJ_HIDDEN, TRAJ_OUT], &mut rng).requires_grad(true));
        p.insert("dec.traj.b2", Tensor::zeros(vec![TRAJ_OUT]).requires_grad(true));
        p.insert("dec.rew.w1", Tensor::fan_in_init(vec![D, REW_HIDDEN], &mut rng).requires_grad(true));
        p.insert("dec.rew.b1", Tensor::zeros(vec![REW_HIDDEN]).requires_grad(true));
        p.insert("dec.rew.w2", Tensor::fan_in_init(vec![REW_HIDDEN, 1], &mut rng).requires_grad(true));
        p.insert("dec.rew.b2", Tensor::zeros(vec![1]).requires_grad(true));
        DecoderHeads { params: p }
    }

    pub fn from_params(params: ParamMap) -> Result<Self> {
        let template = DecoderHeads::new(0);
        for (name, t) in template.params.iter() {
            match params.get(name) {
                Some(have) if have.shape() == t.shape() => {}
                _ => return Err(WmError::MissingParam(name.to_string())),
            }
        }
        Ok(DecoderHeads { params })
    }

    pub fn params(&self) -> &ParamMap {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamMap {
        &mut self.params
    }

    pub fn checksum(&self) -> u64 {
        self.params.checksum()
    }

    fn data(&self, name: &str) -> &[f64] {
        self.params.get(name).expect("decoder param").data()
    }

    /// Tape-free decode of one latent frame (row-major [P, D], 256 values).
    pub fn decode(&self, z: &[f64]) -> Result<DecodedFrame> {
        if z.len() != LATENT_LEN {
            return Err(WmError::BadLatentLen { expected: LATENT_LEN, found: z.len() });
        }
        let mut depth = [0.0; 64];
        {
            let w1 = self.data("dec.depth.w1");
            let b1 = self.data("dec.depth.b1");
            let w2 = self.data("dec.depth.w2");
            let b2 = self.data("dec.depth.b2");
            let mut h = vec![0.0; PATCH_COUNT * DEPTH_HIDDEN];
            kernels::matmul_nn(z, w1, PATCH_COUNT, D, DEPTH_HIDDEN, &mut h);
            for (i, v) in h.iter_mut().enumerate() {
                *v = kernels::gelu(*v + b1[i % DEPTH_HIDDEN]);
            }
            let mut o = vec![0.0; PATCH_COUNT * RAYS_PER_PATCH];
            kernels::matmul_nn(&h, w2, PATCH_COUNT, DEPTH_HIDDEN, RAYS_PER_PATCH, &mut o);
            for i in 0..64 {
                depth[i] = kernels::sigmoid(o[i] + b2[i % RAYS_PER_PATCH]);
            }
        }

        // mean over patches, matching the graph's mean_axis accumulation order
        let mut pooled = [0.0; D];
        for p in 0..PATCH_COUNT {
            for j in 0..D {
                pooled[j] += z[p * D + j];
            }
        }
        let inv = 1.0 / PATCH_COUNT as f64;
        for v in pooled.iter_mut() {
            *v *= inv;
        }

        let mut traj = [[[0.0; 2]; FUTURE_STEPS]; TRACKED_HUMANS];
        {
            let w1 = self.data("dec.traj.w1");
            let b1 = self.data("dec.traj.b1");
            let w2 = self.data("dec.traj.w2");
            let b2 = self.data("dec.traj.b2");
            let mut h = vec![0.0; TRAJ_HIDDEN];
            kernels::matmul_nn(&pooled, w1, 1, D, TRAJ_HIDDEN, &mut h);
            for (i, v) in h.iter_mut().enumerate() {
                *v = kernels::gelu(*v + b1[i]);
            }
            let mut o = vec![0.0; TRAJ_OUT];
            kernels::matmul_nn(&h, w2, 1, TRAJ_HIDDEN, TRAJ_OUT, &mut o);
            for i in 0..TRAJ_OUT {
                let v = o[i] + b2[i];
                traj[i / (FUTURE_STEPS * 2)][(i / 2) % FUTURE_STEPS][i % 2] = v;
            }
        }

        let reward = {
            let w1 = self.data("dec.rew.w1");
            let b1 = self.data("dec.rew.b1");
            let w2 = self.data("dec.rew.w2");
            let b2 = self.data("dec.rew.b2");
            let mut h = vec![0.0; REW_HIDDEN];
            kernels::matmul_nn(&pooled, w1, 1, D, REW_HIDDEN, &mut h);
            for (i, v) in h.iter_mut().enumerate() {
                *v = kernels::gelu(*v + b1[i]);
            }
            let mut o = [0.0; 1];
            kernels::matmul_nn(&h, w2, 1, REW_HIDDEN, 1, &mut o);
            o[0] + b2[0]
        };

        Ok(DecodedFrame { depth, traj, reward })
    }
}

/// Graph decode of a latent batch [B, P, D]. Returns depth [B, 64],
/// trajectories [B, N_h, T, 2], and reward [B].
pub fn decode_graph(
    g: &mut Graph,
    p: &impl VarSource,
    z: Var,
    batch: usize,
) -> Result<(Var, Var, Var)> {
    let flat = g.reshape(z, vec![batch * PATCH_COUNT, D])?;
    let h = g.matmul(flat, p.pv("dec.depth.w1"))?;
    let h = g.add(h, p.pv("dec.depth.b1"))?;
    let h = g.gelu(h);
    let o = g.matmul(h, p.pv("dec.depth.w2"))?;
    let o = g.add(o, p.pv("dec.depth.b2"))?;
    let o = g.sigmoid(o);
    let depth = g.reshape(o, vec![batch, 64])?;

    let pooled = g.mean_axis(z, 1)?; // [B, D]

    // bias adds strip a leading batch dim of 1; re-pin before each matmul
    let h = g.matmul(pooled, p.pv("dec.traj.w1"))?;
    let h = g.add(h, p.pv("dec.traj.b1"))?;
    let h = g.gelu(h);
    let h = g.reshape(h, vec![batch, TRAJ_HIDDEN])?;
    let o = g.matmul(h, p.pv("dec.traj.w2"))?;
    let o = g.add(o, p.pv("dec.traj.b2"))?;
    let traj = g.reshape(o, vec![batch, TRACKED_HUMANS, FUTURE_STEPS, 2])?;

    let h = g.matmul(pooled, p.pv("dec.rew.w1"))?;
    let h = g.add(h, p.pv("dec.rew.b1"))?;
    let h = g.gelu(h);
    let h = g.reshape(h, vec![batch, REW_HIDDEN])?;
    let o = g.matmul(h, p.pv("dec.rew.w2"))?;
    let o = g.add(o, p.pv("dec.rew.b2"))?;
    let reward = g.reshape(o, vec![batch])?;

    Ok((depth, traj, reward))
}
