//! Actor-critic network. A small conv stack reads the depth scan, a gated
//! recurrent cell carries state across steps, and a fusion trunk mixes the
//! recurrent embedding with the lookahead feature before the two heads.
//!
//! Acting and the PPO update run the same graph builder, so the log-prob
//! recorded at collection time is bitwise what the first update recomputes.

use std::path::Path;

use grad_core::seeding::{rng_from, stream_seed};
use grad_core::{checkpoint, Graph, ParamMap, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use world_model::VarSource;

use crate::error::{PolicyError, Result};
use crate::{AUX_LEN, HIDDEN_DIM, LOOKAHEAD_DIM, RAY_COUNT};

const CONV1_CH: usize = 8;
const CONV2_CH: usize = 16;
const KERNEL: usize = 5;
const STRIDE: usize = 2;
// 64 rays -> 30 -> 13 positions after two stride-2 convs
const CONV_OUT: usize = CONV2_CH * 13;
const DEPTH_EMBED: usize = 48;
const EMBED_IN: usize = DEPTH_EMBED + AUX_LEN;
const FUSE_IN: usize = HIDDEN_DIM + LOOKAHEAD_DIM + 2;
const TRUNK: usize = 128;
const N_ACT: usize = world_model::ACTION_COUNT;

pub enum ActMode {
    Sample,
    Argmax,
}

/// One acting step's outputs, all plain values.
pub struct Decision {
    pub action: u8,
    pub log_prob: f64,
    pub value: f64,
    pub hidden_next: Vec<f64>,
    pub log_probs: [f64; N_ACT],
}

/// Graph handles for one forward pass over a batch.
pub struct ForwardVars {
    pub logits: Var,
    pub value: Var,
    pub hidden_next: Var,
}

pub struct PolicyNet {
    params: ParamMap,
}

impl PolicyNet {
    pub fn new(seed: u64) -> Self {
        let mut rng = rng_from(stream_seed(seed, "policy"));
        let mut p = ParamMap::new();
        // conv fan-in counts the whole receptive field, cin * k
        let s1 = 1.0 / ((1 * KERNEL) as f64).sqrt();
        let s2 = 1.0 / ((CONV1_CH * KERNEL) as f64).sqrt();
        p.insert("pol.conv1.w", Tensor::uniform(vec![CONV1_CH, 1, KERNEL], s1, &mut rng).requires_grad(true));
        p.insert("pol.conv1.b", Tensor::zeros(vec![CONV1_CH]).requires_grad(true));
        p.insert("pol.conv2.w", Tensor::uniform(vec![CONV2_CH, CONV1_CH, KERNEL], s2, &mut rng).requires_grad(true));
        p.insert("pol.conv2.b", Tensor::zeros(vec![CONV2_CH]).requires_grad(true));
        p.insert("pol.flat.w", Tensor::fan_in_init(vec![CONV_OUT, DEPTH_EMBED], &mut rng).requires_grad(true));
        p.insert("pol.flat.b", Tensor::zeros(vec![DEPTH_EMBED]).requires_grad(true));
        p.insert("pol.embed.w", Tensor::fan_in_init(vec![EMBED_IN, HIDDEN_DIM], &mut rng).requires_grad(true));
        p.insert("pol.embed.b", Tensor::zeros(vec![HIDDEN_DIM]).requires_grad(true));
        p.insert("pol.cell.wu", Tensor::fan_in_init(vec![2 * HIDDEN_DIM, HIDDEN_DIM], &mut rng).requires_grad(true));
        p.insert("pol.cell.wc", Tensor::fan_in_init(vec![2 * HIDDEN_DIM, HIDDEN_DIM], &mut rng).requires_grad(true));
        p.insert("pol.fuse.w1", Tensor::fan_in_init(vec![FUSE_IN, TRUNK], &mut rng).requires_grad(true));
        p.insert("pol.fuse.b1", Tensor::zeros(vec![TRUNK]).requires_grad(true));
        p.insert("pol.fuse.w2", Tensor::fan_in_init(vec![TRUNK, TRUNK], &mut rng).requires_grad(true));
        p.insert("pol.fuse.b2", Tensor::zeros(vec![TRUNK]).requires_grad(true));
        // near-zero actor weights start the policy close to uniform
        p.insert("pol.actor.w", Tensor::uniform(vec![TRUNK, N_ACT], 0.01, &mut rng).requires_grad(true));
        p.insert("pol.actor.b", Tensor::zeros(vec![N_ACT]).requires_grad(true));
        p.insert("pol.critic.w", Tensor::fan_in_init(vec![TRUNK, 1], &mut rng).requires_grad(true));
        p.insert("pol.critic.b", Tensor::zeros(vec![1]).requires_grad(true));
        PolicyNet { params: p }
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

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(&self.params, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut net = PolicyNet::new(0);
        checkpoint::load_into(&mut net.params, path)?;
        Ok(net)
    }

    /// One acting step for a single observation. `Argmax` leaves the rng
    /// untouched and breaks ties toward the lowest action id.
    pub fn act(
        &self,
        depth: &[f64],
        aux: &[f64],
        hidden: &[f64],
        lookahead: &[f64],
        mode: ActMode,
        rng: &mut ChaCha12Rng,
    ) -> Result<Decision> {
        let mut g = Graph::new();
        let ps = self.params.bind_frozen(&mut g);
        let fv = forward_graph(&mut g, &ps, 1, depth, aux, hidden, lookahead)?;
        let logits = g.value(fv.logits).to_vec();
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(PolicyError::NonFinite("logits"));
        }
        let mut log_probs = [0.0; N_ACT];
        grad_core::kernels::log_softmax_row(&logits, &mut log_probs);
        let action = match mode {
            ActMode::Argmax => {
                let mut best = 0;
                for a in 1..N_ACT {
                    if logits[a] > logits[best] {
                        best = a;
                    }
                }
                best
            }
            ActMode::Sample => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut pick = N_ACT - 1;
                for a in 0..N_ACT {
                    acc += log_probs[a].exp();
                    if u < acc {
                        pick = a;
                        break;
                    }
                }
                pick
            }
        };
        Ok(Decision {
            action: action as u8,
            log_prob: log_probs[action],
            value: g.value(fv.value)[0],
            hidden_next: g.value(fv.hidden_next).to_vec(),
            log_probs,
        })
    }
}

fn check_len(name: &'static str, want: usize, got: usize) -> Result<()> {
    if want != got {
        return Err(PolicyError::LengthMismatch { name, expected: want, found: got });
    }
    Ok(())
}

/// Builds the full forward pass for `batch` stacked samples. All four input
/// slices are row-major per sample; the lookahead rows enter as constants.
///
/// Broadcasting drops a leading batch dim of 1, so every stage re-pins its
/// shape before feeding an op that cares about the axis layout.
pub fn forward_graph(
    g: &mut Graph,
    ps: &impl VarSource,
    batch: usize,
    depth: &[f64],
    aux: &[f64],
    hidden: &[f64],
    lookahead: &[f64],
) -> Result<ForwardVars> {
    check_len("depth", batch * RAY_COUNT, depth.len())?;
    check_len("aux", batch * AUX_LEN, aux.len())?;
    check_len("hidden", batch * HIDDEN_DIM, hidden.len())?;
    check_len("lookahead", batch * LOOKAHEAD_DIM, lookahead.len())?;

    let d = g.constant_from(vec![batch, 1, RAY_COUNT], depth.to_vec())?;
    let aux_v = g.constant_from(vec![batch, AUX_LEN], aux.to_vec())?;
    let h0 = g.constant_from(vec![batch, HIDDEN_DIM], hidden.to_vec())?;
    let look = g.constant_from(vec![batch, LOOKAHEAD_DIM], lookahead.to_vec())?;

    let c1 = g.conv1d(d, ps.pv("pol.conv1.w"), ps.pv("pol.conv1.b"), STRIDE)?;
    let c1 = g.relu(c1);
    let c2 = g.conv1d(c1, ps.pv("pol.conv2.w"), ps.pv("pol.conv2.b"), STRIDE)?;
    let c2 = g.relu(c2);
    let flat = g.reshape(c2, vec![batch, CONV_OUT])?;
    let emb_d = lin(g, flat, ps, "pol.flat", batch, DEPTH_EMBED)?;

    let joined = g.concat(&[emb_d, aux_v], 1)?;
    let x = lin(g, joined, ps, "pol.embed", batch, HIDDEN_DIM)?;

    // gated cell: h' = (1 - u) * h + u * tanh(wc [x, h]), u = sigmoid(wu [x, h])
    let xh = g.concat(&[x, h0], 1)?;
    let u = g.matmul(xh, ps.pv("pol.cell.wu"))?;
    let u = g.sigmoid(u);
    let c = g.matmul(xh, ps.pv("pol.cell.wc"))?;
    let c = g.tanh(c);
    let uh = g.mul(u, h0)?;
    let keep = g.sub(h0, uh)?;
    let uc = g.mul(u, c)?;
    let h1 = g.add(keep, uc)?;
    let h1 = g.reshape(h1, vec![batch, HIDDEN_DIM])?;

    let goal = g.slice_axis(aux_v, 1, 4, 2)?;
    let fused = g.concat(&[h1, look, goal], 1)?;
    let t1 = lin2(g, fused, ps, "pol.fuse.w1", "pol.fuse.b1", batch, TRUNK)?;
    let t1 = g.relu(t1);
    let t2 = lin2(g, t1, ps, "pol.fuse.w2", "pol.fuse.b2", batch, TRUNK)?;
    let t2 = g.relu(t2);

    let logits = lin2(g, t2, ps, "pol.actor.w", "pol.actor.b", batch, N_ACT)?;
    let value = lin2(g, t2, ps, "pol.critic.w", "pol.critic.b", batch, 1)?;
    let value = g.reshape(value, vec![batch])?;

    Ok(ForwardVars { logits, value, hidden_next: h1 })
}

fn lin(
    g: &mut Graph,
    x: Var,
    ps: &impl VarSource,
    prefix: &str,
    batch: usize,
    out: usize,
) -> Result<Var> {
    lin2(g, x, ps, &format!("{prefix}.w"), &format!("{prefix}.b"), batch, out)
}

fn lin2(
    g: &mut Graph,
    x: Var,
    ps: &impl VarSource,
    w: &str,
    b: &str,
    batch: usize,
    out: usize,
) -> Result<Var> {
    let y = g.matmul(x, ps.pv(w))?;
    let y = g.add(y, ps.pv(b))?;
    Ok(g.reshape(y, vec![batch, out])?)
}
