//! Block-causal transition model. Each context frame contributes 8 patch
//! tokens plus one embedded action token; two pre-norm transformer blocks
//! run under a frame-level causal mask and the next frame's latent is read
//! off the last frame's patch positions.
//!
//! Two forward paths share the same kernels: a graph path for training and
//! a tape-free path for acting. Both accumulate in the same order, so their
//! outputs are asserted bitwise-equal in the tests.

use grad_core::kernels::{self, LAYER_NORM_EPS};
use grad_core::seeding::{rng_from, stream_seed};
use grad_core::{Graph, ParamMap, Tensor, Var};

use crate::error::{Result, WmError};
use crate::{
    VarSource, ACTION_COUNT, EMBED_DIM, LATENT_LEN, MAX_CONTEXT_FRAMES, PATCH_COUNT,
    TOKENS_PER_FRAME,
};

pub const BLOCKS: usize = 2;
pub const HEADS: usize = 2;
pub const HEAD_DIM: usize = EMBED_DIM / HEADS;
pub const MLP_HIDDEN: usize = 4 * EMBED_DIM;

const D: usize = EMBED_DIM;

pub struct TransitionModel {
    params: ParamMap,
}

/// Keep-mask where a token in frame j sees all tokens of frames <= j.
pub fn frame_causal_mask(frames: usize) -> Vec<bool> {
    let n = frames * TOKENS_PER_FRAME;
    let mut mask = vec![false; n * n];
    for i in 0..n {
        let fi = i / TOKENS_PER_FRAME;
        for j in 0..n {
            mask[i * n + j] = j / TOKENS_PER_FRAME <= fi;
        }
    }
    mask
}

fn validate_context(frames: usize, actions: &[u8], batch: usize) -> Result<()> {
    if frames == 0 || frames > MAX_CONTEXT_FRAMES {
        return Err(WmError::BadContext { frames });
    }
    if actions.len() != batch * frames {
        return Err(WmError::ActionCount { frames: batch * frames, actions: actions.len() });
    }
    if let Some(&bad) = actions.iter().find(|&&a| a as usize >= ACTION_COUNT) {
        return Err(WmError::BadAction { value: bad });
    }
    Ok(())
}

/// Full token states [B, frames*9, D] after both blocks.
pub fn transformer_states(
    g: &mut Graph,
    p: &impl VarSource,
    z_ctx: Var,
    actions: &[u8],
    batch: usize,
    frames: usize,
) -> Result<Var> {
    validate_context(frames, actions, batch)?;
    let n = frames * TOKENS_PER_FRAME;

    // action tokens via one-hot matmul so the embedding table gets gradient
    let mut onehot = vec![0.0; batch * frames * ACTION_COUNT];
    for (i, &a) in actions.iter().enumerate() {
        onehot[i * ACTION_COUNT + a as usize] = 1.0;
    }
    let oh = g.constant_from(vec![batch * frames, ACTION_COUNT], onehot)?;
    let act_tok = g.matmul(oh, p.pv("tm.act"))?;
    let act_tok = g.reshape(act_tok, vec![batch, frames, 1, D])?;
    let toks = g.concat(&[z_ctx, act_tok], 2)?; // [B, L, 9, D]

    // every token of frame f carries frame f's time embedding
    let time = g.slice_axis(p.pv("tm.time"), 0, 0, frames)?;
    let time = g.reshape(time, vec![frames, 1, D])?;
    let time = g.concat(&vec![time; TOKENS_PER_FRAME], 1)?; // [L, 9, D]
    let x = g.add(toks, time)?; // broadcasts over the batch
    let mut x = g.reshape(x, vec![batch, n, D])?;

    let mask = frame_causal_mask(frames);
    for b in 0..BLOCKS {
        x = block_graph(g, p, x, &mask, batch, n, b)?;
    }
    // broadcasting adds strip leading 1-dims, so a batch of 1 comes out of
    // the blocks rank-2; pin the shape the readout slice depends on
    g.reshape(x, vec![batch, n, D]).map_err(WmError::from)
}

/// Next-frame prediction [B, P, D]: the states at the last frame's patch
/// token positions.
pub fn transformer_forward(
    g: &mut Graph,
    p: &impl VarSource,
    z_ctx: Var,
    actions: &[u8],
    batch: usize,
    frames: usize,
) -> Result<Var> {
    let x = transformer_states(g, p, z_ctx, actions, batch, frames)?;
    let start = (frames - 1) * TOKENS_PER_FRAME;
    g.slice_axis(x, 1, start, PATCH_COUNT).map_err(WmError::from)
}

fn block_graph(
    g: &mut Graph,
    p: &impl VarSource,
    x: Var,
    mask: &[bool],
    batch: usize,
    n: usize,
    bi: usize,
) -> Result<Var> {
    let nm = |s: &str| format!("tm.blk{bi}.{s}");
    // weight matmuls run on flattened rows; [B*N, D] against a rank-2
    // weight walks rows in the same order as the batched form and sidesteps
    // the prefix check when batch is 1
    let h = g.layer_norm(x, p.pv(&nm("ln1.g")), p.pv(&nm("ln1.b")))?;
    let h = g.reshape(h, vec![batch * n, D])?;
    let q = g.matmul(h, p.pv(&nm("attn.wq")))?;
    let k = g.matmul(h, p.pv(&nm("attn.wk")))?;
    let v = g.matmul(h, p.pv(&nm("attn.wv")))?;
    let split = |g: &mut Graph, t: Var| -> Result<Var> {
        let t = g.reshape(t, vec![batch, n, HEADS, HEAD_DIM])?;
        g.swap_axes_1_2(t).map_err(WmError::from)
    };
    let q = split(g, q)?;
    let k = split(g, k)?;
    let v = split(g, v)?;
    let kt = g.transpose_last2(k)?;
    let scores = g.matmul(q, kt)?;
    let scores = g.scale(scores, 1.0 / (HEAD_DIM as f64).sqrt());
    let att = g.softmax_masked(scores, mask, &[n, n])?;
    let ctx = g.matmul(att, v)?; // [B, H, N, HEAD_DIM]
    let ctx = g.swap_axes_1_2(ctx)?;
    let ctx = g.reshape(ctx, vec![batch * n, D])?;
    let proj = g.matmul(ctx, p.pv(&nm("attn.wo")))?;
    let proj = g.reshape(proj, vec![batch, n, D])?;
    let x = g.add(x, proj)?;

    let h2 = g.layer_norm(x, p.pv(&nm("ln2.g")), p.pv(&nm("ln2.b")))?;
    let h2 = g.reshape(h2, vec![batch * n, D])?;
    let m = g.matmul(h2, p.pv(&nm("mlp.w1")))?;
    let m = g.add(m, p.pv(&nm("mlp.b1")))?;
    let m = g.gelu(m);
    let m = g.matmul(m, p.pv(&nm("mlp.w2")))?;
    let m = g.add(m, p.pv(&nm("mlp.b2")))?;
    let m = g.reshape(m, vec![batch, n, D])?;
    g.add(x, m).map_err(WmError::from)
}

/// Per-block key/value projections of a fixed context prefix, reused across
/// the four candidate-action passes of `lookahead`.
pub struct ContextCache {
    rows: usize,       // prefix tokens = (frames - 1) * 9
    k: Vec<Vec<f64>>,  // per block, [rows, D] (heads packed)
    v: Vec<Vec<f64>>,  // per block, [rows, D]
    z_last: Vec<f64>,  // latent of the frame the candidate action belongs to
    time_last: usize,  // its time-embedding index
}

impl TransitionModel {
    pub fn new(seed: u64) -> Self {
        let mut rng = rng_from(stream_seed(seed, "transition"));
        let mut p = ParamMap::new();
        p.insert("tm.act", Tensor::uniform(vec![ACTION_COUNT, D], 0.5, &mut rng).requires_grad(true));
        p.insert(
            "tm.time",
            Tensor::uniform(vec![MAX_CONTEXT_FRAMES, D], 0.5, &mut rng).requires_grad(true),
        );
        for b in 0..BLOCKS {
            let nm = |s: &str| format!("tm.blk{b}.{s}");
            p.insert(&nm("ln1.g"), Tensor::full(vec![D], 1.0).requires_grad(true));
            p.insert(&nm("ln1.b"), Tensor::zeros(vec![D]).requires_grad(true));
            for w in ["attn.wq", "attn.wk", "attn.wv", "attn.wo"] {
                p.insert(&nm(w), Tensor::fan_in_init(vec![D, D], &mut rng).requires_grad(true));
            }
            p.insert(&nm("ln2.g"), Tensor::full(vec![D], 1.0).requires_grad(true));
            p.insert(&nm("ln2.b"), Tensor::zeros(vec![D]).requires_grad(true));
            p.insert(&nm("mlp.w1"), Tensor::fan_in_init(vec![D, MLP_HIDDEN], &mut rng).requires_grad(true));
            p.insert(&nm("mlp.b1"), Tensor::zeros(vec![MLP_HIDDEN]).requires_grad(true));
            p.insert(&nm("mlp.w2"), Tensor::fan_in_init(vec![MLP_HIDDEN, D], &mut rng).requires_grad(true));
            p.insert(&nm("mlp.b2"), Tensor::zeros(vec![D]).requires_grad(true));
        }
        TransitionModel { params: p }
    }

    pub fn from_params(params: ParamMap) -> Result<Self> {
        let template = TransitionModel::new(0);
        for (name, t) in template.params.iter() {
            match params.get(name) {
                Some(have) if have.shape() == t.shape() => {}
                _ => return Err(WmError::MissingParam(name.to_string())),
            }
        }
        Ok(TransitionModel { params })
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
        self.params.get(name).expect("transition param").data()
    }

    /// One next-frame prediction without the tape. `z_ctx` holds up to 5
    /// latent frames oldest-first; `actions[f]` is the action taken at frame
    /// f, the last one being the action whose outcome is predicted.
    pub fn predict_next(&self, z_ctx: &[Vec<f64>], actions: &[u8]) -> Result<Vec<f64>> {
        let frames = z_ctx.len();
        validate_context(frames, actions, 1)?;
        for z in z_ctx {
            if z.len() != LATENT_LEN {
                return Err(WmError::BadLatentLen { expected: LATENT_LEN, found: z.len() });
            }
        }
        let n = frames * TOKENS_PER_FRAME;
        let mut x = vec![0.0; n * D];
        let act = self.data("tm.act");
        let time = self.data("tm.time");
        for f in 0..frames {
            let t_emb = &time[f * D..(f + 1) * D];
            for pi in 0..PATCH_COUNT {
                let row = &mut x[(f * TOKENS_PER_FRAME + pi) * D..][..D];
                let src = &z_ctx[f][pi * D..(pi + 1) * D];
                for j in 0..D {
                    row[j] = src[j] + t_emb[j];
                }
            }
            let a = actions[f] as usize;
            let row = &mut x[(f * TOKENS_PER_FRAME + PATCH_COUNT) * D..][..D];
            for j in 0..D {
                row[j] = act[a * D + j] + t_emb[j];
            }
        }
        let mask = frame_causal_mask(frames);
        for b in 0..BLOCKS {
            self.infer_block(&mut x, n, &mask, n, b);
        }
        let start = (frames - 1) * TOKENS_PER_FRAME * D;
        Ok(x[start..start + LATENT_LEN].to_vec())
    }

    /// Autoregressive imagination. `future_actions[i]` is assigned to the
    /// i-th predicted frame when it is fed back as context, so it influences
    /// predictions after it; the first prediction depends only on the given
    /// context, and the last future action is recorded but unused.
    pub fn imagine_rollout(
        &self,
        z_ctx: &[Vec<f64>],
        actions: &[u8],
        future_actions: &[u8],
    ) -> Result<Vec<Vec<f64>>> {
        if future_actions.is_empty() {
            return Err(WmError::EmptyPlan);
        }
        let mut ctx = z_ctx.to_vec();
        let mut acts = actions.to_vec();
        let mut out = Vec::with_capacity(future_actions.len());
        for (i, &fa) in future_actions.iter().enumerate() {
            let pred = self.predict_next(&ctx, &acts)?;
            out.push(pred.clone());
            if i + 1 < future_actions.len() {
                ctx.push(pred);
                acts.push(fa);
                if ctx.len() > MAX_CONTEXT_FRAMES {
                    ctx.remove(0);
                    acts.remove(0);
                }
            }
        }
        Ok(out)
    }

    /// Predictions for every candidate action at once. `past_actions` covers
    /// all context frames except the last; the candidate fills that slot.
    /// Equals `predict_next` with the candidate appended, bitwise, but the
    /// frames before the candidate run through the blocks only once.
    pub fn lookahead(
        &self,
        z_ctx: &[Vec<f64>],
        past_actions: &[u8],
    ) -> Result<[Vec<f64>; ACTION_COUNT]> {
        let cache = self.context_cache(z_ctx, past_actions)?;
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(ACTION_COUNT);
        for a in 0..ACTION_COUNT {
            out.push(self.lookahead_one(&cache, a as u8));
        }
        Ok(out.try_into().expect("four actions"))
    }

    /// Runs the shared prefix once, recording per-block keys and values.
    pub fn context_cache(&self, z_ctx: &[Vec<f64>], past_actions: &[u8]) -> Result<ContextCache> {
        let frames = z_ctx.len();
        if frames == 0 || frames > MAX_CONTEXT_FRAMES {
            return Err(WmError::BadContext { frames });
        }
        if past_actions.len() != frames - 1 {
            return Err(WmError::ActionCount { frames: frames - 1, actions: past_actions.len() });
        }
        if let Some(&bad) = past_actions.iter().find(|&&a| a as usize >= ACTION_COUNT) {
            return Err(WmError::BadAction { value: bad });
        }
        for z in z_ctx {
            if z.len() != LATENT_LEN {
                return Err(WmError::BadLatentLen { expected: LATENT_LEN, found: z.len() });
            }
        }
        let prefix = frames - 1;
        let rows = prefix * TOKENS_PER_FRAME;
        let mut k = vec![vec![0.0; rows * D]; BLOCKS];
        let mut v = vec![vec![0.0; rows * D]; BLOCKS];
        if prefix > 0 {
            let act = self.data("tm.act");
            let time = self.data("tm.time");
            let mut x = vec![0.0; rows * D];
            for f in 0..prefix {
                let t_emb = &time[f * D..(f + 1) * D];
                for pi in 0..PATCH_COUNT {
                    let row = &mut x[(f * TOKENS_PER_FRAME + pi) * D..][..D];
                    let src = &z_ctx[f][pi * D..(pi + 1) * D];
                    for j in 0..D {
                        row[j] = src[j] + t_emb[j];
                    }
                }
                let a = past_actions[f] as usize;
                let row = &mut x[(f * TOKENS_PER_FRAME + PATCH_COUNT) * D..][..D];
                for j in 0..D {
                    row[j] = act[a * D + j] + t_emb[j];
                }
            }
            let mask = frame_causal_mask(prefix);
            for b in 0..BLOCKS {
                self.infer_block_caching(&mut x, rows, &mask, rows, b, &mut k[b], &mut v[b]);
            }
        }
        Ok(ContextCache {
            rows,
            k,
            v,
            z_last: z_ctx[frames - 1].clone(),
            time_last: frames - 1,
        })
    }

    /// One candidate branch: assembles the final frame's 9 tokens with the
    /// candidate action and runs them against the cached prefix.
    pub fn lookahead_one(&self, cache: &ContextCache, action: u8) -> Vec<f64> {
        assert!((action as usize) < ACTION_COUNT, "action id out of range");
        let act = self.data("tm.act");
        let time = self.data("tm.time");
        let t_emb = &time[cache.time_last * D..(cache.time_last + 1) * D];
        let mut x = vec![0.0; TOKENS_PER_FRAME * D];
        for pi in 0..PATCH_COUNT {
            let row = &mut x[pi * D..(pi + 1) * D];
            let src = &cache.z_last[pi * D..(pi + 1) * D];
            for j in 0..D {
                row[j] = src[j] + t_emb[j];
            }
        }
        let a = action as usize;
        let row = &mut x[PATCH_COUNT * D..(PATCH_COUNT + 1) * D];
        for j in 0..D {
            row[j] = act[a * D + j] + t_emb[j];
        }
        let n = cache.rows + TOKENS_PER_FRAME;
        // the branch frame is the newest, so every key is visible
        let mask = vec![true; TOKENS_PER_FRAME * n];
        for b in 0..BLOCKS {
            self.branch_block(&mut x, cache, &mask, n, b);
        }
        x[..LATENT_LEN].to_vec()
    }

    /// Shared attention core: processes `rows` query tokens whose keys are
    /// `keys` (the queries themselves, possibly prefixed by cached rows).
    /// `x` is updated in place; `sink` optionally records this block's k/v
    /// of the query rows.
    #[allow(clippy::too_many_arguments)]
    fn attn_mlp_rows(
        &self,
        x: &mut [f64],
        rows: usize,
        k_prefix: &[f64],
        v_prefix: &[f64],
        mask: &[bool],
        n: usize,
        bi: usize,
        mut sink: Option<(&mut Vec<f64>, &mut Vec<f64>)>,
    ) {
        let nm = |s: &str| format!("tm.blk{bi}.{s}");
        let ln1g = self.data(&nm("ln1.g"));
        let ln1b = self.data(&nm("ln1.b"));
        let mut h = vec![0.0; rows * D];
        let mut stats = vec![0.0; 2 * rows];
        kernels::layer_norm_rows(&x[..rows * D], ln1g, ln1b, D, &mut h, &mut stats);

        let mut q = vec![0.0; rows * D];
        let mut k = vec![0.0; rows * D];
        let mut v = vec![0.0; rows * D];
        kernels::matmul_nn(&h, self.data(&nm("attn.wq")), rows, D, D, &mut q);
        kernels::matmul_nn(&h, self.data(&nm("attn.wk")), rows, D, D, &mut k);
        kernels::matmul_nn(&h, self.data(&nm("attn.wv")), rows, D, D, &mut v);
        if let Some((ks, vs)) = sink.as_mut() {
            ks.copy_from_slice(&k);
            vs.copy_from_slice(&v);
        }

        let prefix_rows = k_prefix.len() / D;
        debug_assert_eq!(prefix_rows + rows, n);
        let scale = 1.0 / (HEAD_DIM as f64).sqrt();
        let mut ctx = vec![0.0; rows * D];
        let mut qh = vec![0.0; rows * HEAD_DIM];
        let mut kth = vec![0.0; HEAD_DIM * n];
        let mut vh = vec![0.0; n * HEAD_DIM];
        let mut scores = vec![0.0; rows * n];
        let mut att = vec![0.0; rows * n];
        let mut ctxh = vec![0.0; rows * HEAD_DIM];
        for head in 0..HEADS {
            let off = head * HEAD_DIM;
            for r in 0..rows {
                qh[r * HEAD_DIM..(r + 1) * HEAD_DIM]
                    .copy_from_slice(&q[r * D + off..r * D + off + HEAD_DIM]);
            }
            // keys transposed [HEAD_DIM, n], prefix rows first then own rows
            for r in 0..prefix_rows {
                for c in 0..HEAD_DIM {
                    kth[c * n + r] = k_prefix[r * D + off + c];
                }
            }
            for r in 0..rows {
                for c in 0..HEAD_DIM {
                    kth[c * n + prefix_rows + r] = k[r * D + off + c];
                }
            }
            for r in 0..prefix_rows {
                vh[r * HEAD_DIM..(r + 1) * HEAD_DIM]
                    .copy_from_slice(&v_prefix[r * D + off..r * D + off + HEAD_DIM]);
            }
            for r in 0..rows {
                vh[(prefix_rows + r) * HEAD_DIM..(prefix_rows + r + 1) * HEAD_DIM]
                    .copy_from_slice(&v[r * D + off..r * D + off + HEAD_DIM]);
            }
            scores.iter_mut().for_each(|s| *s = 0.0);
            kernels::matmul_nn(&qh, &kth, rows, HEAD_DIM, n, &mut scores);
            scores.iter_mut().for_each(|s| *s *= scale);
            let bad = kernels::softmax_masked_rows(&scores, mask, n, &mut att);
            debug_assert!(bad.is_none(), "causal mask never empties a row");
            ctxh.iter_mut().for_each(|c| *c = 0.0);
            kernels::matmul_nn(&att, &vh, rows, n, HEAD_DIM, &mut ctxh);
            for r in 0..rows {
                ctx[r * D + off..r * D + off + HEAD_DIM]
                    .copy_from_slice(&ctxh[r * HEAD_DIM..(r + 1) * HEAD_DIM]);
            }
        }
        let mut proj = vec![0.0; rows * D];
        kernels::matmul_nn(&ctx, self.data(&nm("attn.wo")), rows, D, D, &mut proj);
        for i in 0..rows * D {
            x[i] += proj[i];
        }

        let ln2g = self.data(&nm("ln2.g"));
        let ln2b = self.data(&nm("ln2.b"));
        kernels::layer_norm_rows(&x[..rows * D], ln2g, ln2b, D, &mut h, &mut stats);
        let mut m1 = vec![0.0; rows * MLP_HIDDEN];
        kernels::matmul_nn(&h, self.data(&nm("mlp.w1")), rows, D, MLP_HIDDEN, &mut m1);
        let b1 = self.data(&nm("mlp.b1"));
        for (i, mv) in m1.iter_mut().enumerate() {
            *mv = kernels::gelu(*mv + b1[i % MLP_HIDDEN]);
        }
        let mut m2 = vec![0.0; rows * D];
        kernels::matmul_nn(&m1, self.data(&nm("mlp.w2")), rows, MLP_HIDDEN, D, &mut m2);
        let b2 = self.data(&nm("mlp.b2"));
        for i in 0..rows * D {
            x[i] += m2[i] + b2[i % D];
        }
    }

    fn infer_block(&self, x: &mut [f64], rows: usize, mask: &[bool], n: usize, bi: usize) {
        self.attn_mlp_rows(x, rows, &[], &[], mask, n, bi, None);
    }

    fn infer_block_caching(
        &self,
        x: &mut [f64],
        rows: usize,
        mask: &[bool],
        n: usize,
        bi: usize,
        k_out: &mut Vec<f64>,
        v_out: &mut Vec<f64>,
    ) {
        self.attn_mlp_rows(x, rows, &[], &[], mask, n, bi, Some((k_out, v_out)));
    }

    fn branch_block(&self, x: &mut [f64], cache: &ContextCache, mask: &[bool], n: usize, bi: usize) {
        // split borrows: k/v prefixes live in the cache, x is the branch rows
        let kp = &cache.k[bi];
        let vp = &cache.v[bi];
        self.attn_mlp_rows(x, TOKENS_PER_FRAME, kp, vp, mask, n, bi, None);
    }
}

// gelu+bias fusion above must match the graph's add-then-gelu exactly; the
// graph computes gelu(m + b) elementwise as well, so the only difference is
// loop structure, not arithmetic. layer_norm eps is shared via the kernel.
const _: () = assert!(LAYER_NORM_EPS == 1e-5);
