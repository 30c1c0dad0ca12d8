//! Define-by-run tape. Operations append nodes; `backward` replays the tape
//! in reverse insertion order exactly once, accumulating into each
//! requires-grad node. A fresh graph is built every forward pass.

use crate::error::{GradError, Result};
use crate::kernels;
use crate::tensor::Tensor;

/// Handle to a node in a [`Graph`]. Only valid for the graph that created it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Gelu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Clamp(Var, f64, f64),
    Min2(Var, Var),
    MatMul { a: Var, b: Var, batch: usize, m: usize, k: usize, n: usize, a_batched: bool, b_batched: bool },
    TransposeLast2(Var),
    SwapAxes12(Var),
    SoftmaxMasked { x: Var, mask: Vec<bool> },
    LayerNorm { x: Var, gain: Var, bias: Var, mean_istd: Vec<f64> },
    MeanAxis { x: Var, axis: usize },
    SumAll(Var),
    MeanAll(Var),
    Concat { xs: Vec<Var>, axis: usize },
    SliceAxis { x: Var, axis: usize, start: usize },
    Reshape(Var),
    Conv1d { x: Var, w: Var, b: Var, stride: usize },
    CategoricalLogProb { logits: Var, actions: Vec<usize>, logp: Vec<f64> },
    Entropy { logits: Var, logp: Vec<f64> },
}

struct Node {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Suffix-broadcast check: shapes equal, or the smaller one (after stripping
/// leading 1s) is a trailing suffix of the larger.
fn broadcast_shapes(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let strip = |s: &[usize]| -> Vec<usize> {
        let mut i = 0;
        while i + 1 < s.len() && s[i] == 1 {
            i += 1;
        }
        s[i..].to_vec()
    };
    let sa = strip(a);
    let sb = strip(b);
    let (big, small) = if sa.len() >= sb.len() { (&sa, &sb) } else { (&sb, &sa) };
    if big[big.len() - small.len()..] != small[..] {
        return Err(GradError::ShapeMismatch(a.to_vec(), b.to_vec()));
    }
    Ok(big.clone())
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, op: Op) -> Var {
        let grad = if requires_grad { vec![0.0; data.len()] } else { Vec::new() };
        self.nodes.push(Node { shape, data, grad, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        let n = &self.nodes[v.0];
        if n.requires_grad {
            Some(&n.grad)
        } else {
            None
        }
    }

    /// Copies a tensor in as a leaf node.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), t.requires_grad_flag(), Op::Leaf)
    }

    /// Copies a tensor in as a constant (never receives gradient).
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), false, Op::Leaf)
    }

    pub fn constant_from(&mut self, shape: Vec<usize>, data: Vec<f64>) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(GradError::BadShape { shape, len: data.len() });
        }
        Ok(self.push(shape, data, false, Op::Leaf))
    }

    fn binary(&mut self, a: Var, b: Var, op: fn(f64, f64) -> f64, kind: fn(Var, Var) -> Op) -> Result<Var> {
        let out_shape = broadcast_shapes(self.shape(a), self.shape(b))?;
        let numel: usize = out_shape.iter().product();
        let (da, db) = (&self.nodes[a.0].data, &self.nodes[b.0].data);
        let (na, nb) = (da.len(), db.len());
        let mut data = vec![0.0; numel];
        if na == numel && nb == numel {
            for i in 0..numel {
                data[i] = op(da[i], db[i]);
            }
        } else {
            for (i, v) in data.iter_mut().enumerate() {
                *v = op(da[i % na], db[i % nb]);
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out_shape, data, rg, kind(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, |x, y| x * y, Op::Mul)
    }

    pub fn min2(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, f64::min, Op::Min2)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let data = self.nodes[x.0].data.iter().map(|v| v * c).collect();
        let rg = self.rg(x);
        self.push(self.shape(x).to_vec(), data, rg, Op::Scale(x, c))
    }

    fn unary(&mut self, x: Var, f: fn(f64) -> f64, op: fn(Var) -> Op) -> Var {
        let data = self.nodes[x.0].data.iter().map(|&v| f(v)).collect();
        let rg = self.rg(x);
        self.push(self.shape(x).to_vec(), data, rg, op(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu)
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        self.unary(x, kernels::gelu, Op::Gelu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, kernels::sigmoid, Op::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp)
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let data = self.nodes[x.0].data.iter().map(|v| v.clamp(lo, hi)).collect();
        let rg = self.rg(x);
        self.push(self.shape(x).to_vec(), data, rg, Op::Clamp(x, lo, hi))
    }

    /// Batched matrix product. Batch prefixes must match, or one operand may
    /// be unbatched (rank 2) and is shared across the batch.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() < 2 || sb.len() < 2 {
            return Err(GradError::MatmulDims(sa, sb));
        }
        let (m, ka) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (kb, n) = (sb[sb.len() - 2], sb[sb.len() - 1]);
        if ka != kb {
            return Err(GradError::MatmulDims(sa, sb));
        }
        let batch_a: usize = sa[..sa.len() - 2].iter().product();
        let batch_b: usize = sb[..sb.len() - 2].iter().product();
        let (batch, prefix): (usize, Vec<usize>) = if batch_a == batch_b {
            if sa[..sa.len() - 2] != sb[..sb.len() - 2] {
                return Err(GradError::MatmulDims(sa, sb));
            }
            (batch_a, sa[..sa.len() - 2].to_vec())
        } else if batch_b == 1 && sb.len() == 2 {
            (batch_a, sa[..sa.len() - 2].to_vec())
        } else if batch_a == 1 && sa.len() == 2 {
            (batch_b, sb[..sb.len() - 2].to_vec())
        } else {
            return Err(GradError::MatmulDims(sa, sb));
        };
        let a_batched = batch_a == batch;
        let b_batched = batch_b == batch;
        let mut data = vec![0.0; batch * m * n];
        {
            let da = &self.nodes[a.0].data;
            let db = &self.nodes[b.0].data;
            for bi in 0..batch {
                let ai = if a_batched { bi } else { 0 };
                let bbi = if b_batched { bi } else { 0 };
                kernels::matmul_nn(
                    &da[ai * m * ka..(ai + 1) * m * ka],
                    &db[bbi * ka * n..(bbi + 1) * ka * n],
                    m,
                    ka,
                    n,
                    &mut data[bi * m * n..(bi + 1) * m * n],
                );
            }
        }
        let mut out_shape = prefix;
        out_shape.push(m);
        out_shape.push(n);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out_shape, data, rg, Op::MatMul { a, b, batch, m, k: ka, n, a_batched, b_batched }))
    }

    pub fn transpose_last2(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() < 2 {
            return Err(GradError::BadAxis { axis: s.len(), rank: s.len() });
        }
        let (m, n) = (s[s.len() - 2], s[s.len() - 1]);
        let batch: usize = s[..s.len() - 2].iter().product();
        let src = &self.nodes[x.0].data;
        let mut data = vec![0.0; src.len()];
        for bi in 0..batch {
            let base = bi * m * n;
            for i in 0..m {
                for j in 0..n {
                    data[base + j * m + i] = src[base + i * n + j];
                }
            }
        }
        let mut out_shape = s.clone();
        let rank = out_shape.len();
        out_shape.swap(rank - 2, rank - 1);
        let rg = self.rg(x);
        Ok(self.push(out_shape, data, rg, Op::TransposeLast2(x)))
    }

    /// Swaps axes 1 and 2 of a rank-4 tensor; used for attention head layout.
    pub fn swap_axes_1_2(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 4 {
            return Err(GradError::BadAxis { axis: 1, rank: s.len() });
        }
        let (d0, d1, d2, d3) = (s[0], s[1], s[2], s[3]);
        let src = &self.nodes[x.0].data;
        let mut data = vec![0.0; src.len()];
        for a in 0..d0 {
            for b in 0..d1 {
                for c in 0..d2 {
                    let src_base = ((a * d1 + b) * d2 + c) * d3;
                    let dst_base = ((a * d2 + c) * d1 + b) * d3;
                    data[dst_base..dst_base + d3].copy_from_slice(&src[src_base..src_base + d3]);
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(vec![d0, d2, d1, d3], data, rg, Op::SwapAxes12(x)))
    }

    /// Softmax over the last axis with a boolean keep-mask. The mask shape
    /// must be a trailing suffix of `x`'s shape and tiles over leading dims.
    /// Masked positions output exactly zero.
    pub fn softmax_masked(&mut self, x: Var, mask: &[bool], mask_shape: &[usize]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let n = *s.last().ok_or(GradError::BadAxis { axis: 0, rank: 0 })?;
        if mask_shape.last() != Some(&n) || mask.len() != mask_shape.iter().product::<usize>() {
            return Err(GradError::ShapeMismatch(s, mask_shape.to_vec()));
        }
        if s.len() < mask_shape.len() || s[s.len() - mask_shape.len()..] != *mask_shape {
            return Err(GradError::ShapeMismatch(s, mask_shape.to_vec()));
        }
        let src = &self.nodes[x.0].data;
        let mut data = vec![0.0; src.len()];
        if let Some(row) = kernels::softmax_masked_rows(src, mask, n, &mut data) {
            return Err(GradError::FullyMaskedRow { row });
        }
        let rg = self.rg(x);
        Ok(self.push(s, data, rg, Op::SoftmaxMasked { x, mask: mask.to_vec() }))
    }

    /// Layer norm over the last axis (eps 1e-5) followed by the affine map
    /// `gain * xhat + bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let s = self.shape(x).to_vec();
        let d = *s.last().ok_or(GradError::BadAxis { axis: 0, rank: 0 })?;
        if self.shape(gain) != [d] || self.shape(bias) != [d] {
            return Err(GradError::ShapeMismatch(self.shape(gain).to_vec(), vec![d]));
        }
        let rows = self.nodes[x.0].data.len() / d;
        let mut data = vec![0.0; rows * d];
        let mut mean_istd = vec![0.0; 2 * rows];
        kernels::layer_norm_rows(
            &self.nodes[x.0].data,
            &self.nodes[gain.0].data,
            &self.nodes[bias.0].data,
            d,
            &mut data,
            &mut mean_istd,
        );
        let rg = self.rg(x) || self.rg(gain) || self.rg(bias);
        Ok(self.push(s, data, rg, Op::LayerNorm { x, gain, bias, mean_istd }))
    }

    /// Mean-reduce over one axis, removing it from the shape.
    pub fn mean_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() {
            return Err(GradError::BadAxis { axis, rank: s.len() });
        }
        let outer: usize = s[..axis].iter().product();
        let len = s[axis];
        let inner: usize = s[axis + 1..].iter().product();
        let src = &self.nodes[x.0].data;
        let mut data = vec![0.0; outer * inner];
        for o in 0..outer {
            for t in 0..len {
                let base = (o * len + t) * inner;
                let dst = &mut data[o * inner..(o + 1) * inner];
                for i in 0..inner {
                    dst[i] += src[base + i];
                }
            }
        }
        let scale = 1.0 / len as f64;
        data.iter_mut().for_each(|v| *v *= scale);
        let mut out_shape = s.clone();
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let rg = self.rg(x);
        Ok(self.push(out_shape, data, rg, Op::MeanAxis { x, axis }))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s: f64 = self.nodes[x.0].data.iter().sum();
        let rg = self.rg(x);
        self.push(vec![1], vec![s], rg, Op::SumAll(x))
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.nodes[x.0].data.len();
        let s: f64 = self.nodes[x.0].data.iter().sum();
        let rg = self.rg(x);
        self.push(vec![1], vec![s / n as f64], rg, Op::MeanAll(x))
    }

    /// Concatenates along `axis`. All other dims must match.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        assert!(!xs.is_empty());
        let first = self.shape(xs[0]).to_vec();
        if axis >= first.len() {
            return Err(GradError::BadAxis { axis, rank: first.len() });
        }
        let mut axis_total = 0;
        for &v in xs {
            let s = self.shape(v);
            if s.len() != first.len()
                || s.iter().enumerate().any(|(i, &d)| i != axis && d != first[i])
            {
                return Err(GradError::ShapeMismatch(first, s.to_vec()));
            }
            axis_total += s[axis];
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let mut out_shape = first.clone();
        out_shape[axis] = axis_total;
        let mut data = vec![0.0; outer * axis_total * inner];
        let mut offset = 0;
        for &v in xs {
            let len = self.shape(v)[axis];
            let src = &self.nodes[v.0].data;
            for o in 0..outer {
                let dst_base = (o * axis_total + offset) * inner;
                let src_base = o * len * inner;
                data[dst_base..dst_base + len * inner]
                    .copy_from_slice(&src[src_base..src_base + len * inner]);
            }
            offset += len;
        }
        let rg = xs.iter().any(|&v| self.rg(v));
        Ok(self.push(out_shape, data, rg, Op::Concat { xs: xs.to_vec(), axis }))
    }

    pub fn slice_axis(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || start + len > s[axis] {
            return Err(GradError::BadAxis { axis, rank: s.len() });
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let src = &self.nodes[x.0].data;
        let mut data = vec![0.0; outer * len * inner];
        for o in 0..outer {
            let src_base = (o * s[axis] + start) * inner;
            let dst_base = o * len * inner;
            data[dst_base..dst_base + len * inner]
                .copy_from_slice(&src[src_base..src_base + len * inner]);
        }
        let mut out_shape = s.clone();
        out_shape[axis] = len;
        let rg = self.rg(x);
        Ok(self.push(out_shape, data, rg, Op::SliceAxis { x, axis, start }))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.nodes[x.0].data.len() {
            return Err(GradError::BadShape { shape, len: self.nodes[x.0].data.len() });
        }
        let data = self.nodes[x.0].data.clone();
        let rg = self.rg(x);
        Ok(self.push(shape, data, rg, Op::Reshape(x)))
    }

    /// Valid 1D convolution. `x` is (cin, l) or (batch, cin, l); `w` is
    /// (cout, cin, k); `b` is (cout).
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        if sw.len() != 3 || (sx.len() != 2 && sx.len() != 3) {
            return Err(GradError::ShapeMismatch(sx, sw));
        }
        let (batch, cin, l) = if sx.len() == 2 { (1, sx[0], sx[1]) } else { (sx[0], sx[1], sx[2]) };
        let (cout, wcin, k) = (sw[0], sw[1], sw[2]);
        if wcin != cin || self.shape(b) != [cout] || l < k {
            return Err(GradError::ShapeMismatch(sx, sw));
        }
        let l_out = (l - k) / stride + 1;
        let mut data = vec![0.0; batch * cout * l_out];
        for bi in 0..batch {
            kernels::conv1d_single(
                &self.nodes[x.0].data[bi * cin * l..(bi + 1) * cin * l],
                &self.nodes[w.0].data,
                &self.nodes[b.0].data,
                cin,
                l,
                cout,
                k,
                stride,
                &mut data[bi * cout * l_out..(bi + 1) * cout * l_out],
            );
        }
        let out_shape = if sx.len() == 2 { vec![cout, l_out] } else { vec![batch, cout, l_out] };
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        Ok(self.push(out_shape, data, rg, Op::Conv1d { x, w, b, stride }))
    }

    /// Log-probability of the chosen action per row of logits (batch, n_act).
    pub fn categorical_logprob(&mut self, logits: Var, actions: &[usize]) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || s[0] != actions.len() {
            return Err(GradError::BadShape { shape: s, len: actions.len() });
        }
        let (rows, n) = (s[0], s[1]);
        let src = &self.nodes[logits.0].data;
        let mut logp = vec![0.0; rows * n];
        for r in 0..rows {
            kernels::log_softmax_row(&src[r * n..(r + 1) * n], &mut logp[r * n..(r + 1) * n]);
        }
        let mut data = vec![0.0; rows];
        for r in 0..rows {
            if actions[r] >= n {
                return Err(GradError::BadShape { shape: vec![rows, n], len: actions[r] });
            }
            data[r] = logp[r * n + actions[r]];
        }
        let rg = self.rg(logits);
        Ok(self.push(vec![rows], data, rg, Op::CategoricalLogProb { logits, actions: actions.to_vec(), logp }))
    }

    /// Shannon entropy of the categorical distribution per row of logits.
    pub fn entropy(&mut self, logits: Var) -> Result<Var> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 {
            return Err(GradError::BadShape { shape: s, len: 2 });
        }
        let (rows, n) = (s[0], s[1]);
        let src = &self.nodes[logits.0].data;
        let mut logp = vec![0.0; rows * n];
        let mut data = vec![0.0; rows];
        for r in 0..rows {
            kernels::log_softmax_row(&src[r * n..(r + 1) * n], &mut logp[r * n..(r + 1) * n]);
            let mut h = 0.0;
            for j in 0..n {
                let lp = logp[r * n + j];
                h -= lp.exp() * lp;
            }
            data[r] = h;
        }
        let rg = self.rg(logits);
        Ok(self.push(vec![rows], data, rg, Op::Entropy { logits, logp }))
    }

    /// Reverse pass from a scalar loss. Every requires-grad node reachable
    /// from the loss gets its gradient populated; leaves keep accumulating
    /// across repeated calls on the same graph.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].data.len() != 1 {
            return Err(GradError::NonScalarLoss(self.nodes[loss.0].shape.clone()));
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(()); // constant loss: all gradients are zero
        }
        self.nodes[loss.0].grad[0] += 1.0;
        for id in (0..=loss.0).rev() {
            if !self.nodes[id].requires_grad {
                continue;
            }
            let contribs = self.node_backward(id);
            for (v, c) in contribs {
                if self.nodes[v.0].requires_grad {
                    let g = &mut self.nodes[v.0].grad;
                    for (dst, src) in g.iter_mut().zip(&c) {
                        *dst += src;
                    }
                }
            }
        }
        Ok(())
    }

    /// Gradient contributions of node `id` to each of its inputs.
    fn node_backward(&self, id: usize) -> Vec<(Var, Vec<f64>)> {
        let node = &self.nodes[id];
        let up = &node.grad;
        let out = &node.data;
        let reduce = |v: Var, full: &[f64]| -> Vec<f64> {
            // Sum suffix-broadcast contributions back down to the input size.
            let n = self.nodes[v.0].data.len();
            if n == full.len() {
                return full.to_vec();
            }
            let mut g = vec![0.0; n];
            for (i, &u) in full.iter().enumerate() {
                g[i % n] += u;
            }
            g
        };
        match &node.op {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![(*a, reduce(*a, up)), (*b, reduce(*b, up))],
            Op::Sub(a, b) => {
                let neg: Vec<f64> = up.iter().map(|v| -v).collect();
                vec![(*a, reduce(*a, up)), (*b, reduce(*b, &neg))]
            }
            Op::Mul(a, b) => {
                let da = &self.nodes[a.0].data;
                let db = &self.nodes[b.0].data;
                let (na, nb) = (da.len(), db.len());
                let ga: Vec<f64> = up.iter().enumerate().map(|(i, u)| u * db[i % nb]).collect();
                let gb: Vec<f64> = up.iter().enumerate().map(|(i, u)| u * da[i % na]).collect();
                vec![(*a, reduce(*a, &ga)), (*b, reduce(*b, &gb))]
            }
            Op::Min2(a, b) => {
                let da = &self.nodes[a.0].data;
                let db = &self.nodes[b.0].data;
                let (na, nb) = (da.len(), db.len());
                let mut ga = vec![0.0; up.len()];
                let mut gb = vec![0.0; up.len()];
                for (i, &u) in up.iter().enumerate() {
                    if da[i % na] <= db[i % nb] {
                        ga[i] = u;
                    } else {
                        gb[i] = u;
                    }
                }
                vec![(*a, reduce(*a, &ga)), (*b, reduce(*b, &gb))]
            }
            Op::Scale(x, c) => vec![(*x, up.iter().map(|u| u * c).collect())],
            Op::Relu(x) => {
                let dx = &self.nodes[x.0].data;
                vec![(*x, up.iter().zip(dx).map(|(u, &v)| if v > 0.0 { *u } else { 0.0 }).collect())]
            }
            Op::Gelu(x) => {
                let dx = &self.nodes[x.0].data;
                vec![(*x, up.iter().zip(dx).map(|(u, &v)| u * kernels::gelu_grad(v)).collect())]
            }
            Op::Sigmoid(x) => {
                vec![(*x, up.iter().zip(out).map(|(u, &y)| u * y * (1.0 - y)).collect())]
            }
            Op::Tanh(x) => {
                vec![(*x, up.iter().zip(out).map(|(u, &y)| u * (1.0 - y * y)).collect())]
            }
            Op::Exp(x) => vec![(*x, up.iter().zip(out).map(|(u, &y)| u * y).collect())],
            Op::Clamp(x, lo, hi) => {
                let dx = &self.nodes[x.0].data;
                vec![(
                    *x,
                    up.iter()
                        .zip(dx)
                        .map(|(u, &v)| if v >= *lo && v <= *hi { *u } else { 0.0 })
                        .collect(),
                )]
            }
            Op::MatMul { a, b, batch, m, k, n, a_batched, b_batched } => {
                let da = &self.nodes[a.0].data;
                let db = &self.nodes[b.0].data;
                let mut ga = vec![0.0; da.len()];
                let mut gb = vec![0.0; db.len()];
                for bi in 0..*batch {
                    let ai = if *a_batched { bi } else { 0 };
                    let bbi = if *b_batched { bi } else { 0 };
                    let upm = &up[bi * m * n..(bi + 1) * m * n];
                    // dA += dOut * B^T
                    kernels::matmul_nt(
                        upm,
                        &db[bbi * k * n..(bbi + 1) * k * n],
                        *m,
                        *n,
                        *k,
                        &mut ga[ai * m * k..(ai + 1) * m * k],
                    );
                    // dB += A^T * dOut
                    kernels::matmul_tn(
                        &da[ai * m * k..(ai + 1) * m * k],
                        upm,
                        *k,
                        *m,
                        *n,
                        &mut gb[bbi * k * n..(bbi + 1) * k * n],
                    );
                }
                vec![(*a, ga), (*b, gb)]
            }
            Op::TransposeLast2(x) => {
                let s = &node.shape;
                let (m, n) = (s[s.len() - 2], s[s.len() - 1]);
                let batch: usize = s[..s.len() - 2].iter().product();
                let mut g = vec![0.0; up.len()];
                for bi in 0..batch {
                    let base = bi * m * n;
                    for i in 0..m {
                        for j in 0..n {
                            g[base + j * m + i] = up[base + i * n + j];
                        }
                    }
                }
                vec![(*x, g)]
            }
            Op::SwapAxes12(x) => {
                let s = &node.shape;
                let (d0, d1, d2, d3) = (s[0], s[1], s[2], s[3]);
                let mut g = vec![0.0; up.len()];
                for a in 0..d0 {
                    for b in 0..d1 {
                        for c in 0..d2 {
                            let up_base = ((a * d1 + b) * d2 + c) * d3;
                            let g_base = ((a * d2 + c) * d1 + b) * d3;
                            g[g_base..g_base + d3].copy_from_slice(&up[up_base..up_base + d3]);
                        }
                    }
                }
                vec![(*x, g)]
            }
            Op::SoftmaxMasked { x, mask } => {
                let n = *node.shape.last().unwrap();
                let rows = out.len() / n;
                let mask_rows = mask.len() / n;
                let mut g = vec![0.0; up.len()];
                for r in 0..rows {
                    let p = &out[r * n..(r + 1) * n];
                    let u = &up[r * n..(r + 1) * n];
                    let mr = &mask[(r % mask_rows) * n..(r % mask_rows + 1) * n];
                    let mut inner = 0.0;
                    for j in 0..n {
                        inner += u[j] * p[j];
                    }
                    let gr = &mut g[r * n..(r + 1) * n];
                    for j in 0..n {
                        if mr[j] {
                            gr[j] = p[j] * (u[j] - inner);
                        }
                    }
                }
                vec![(*x, g)]
            }
            Op::LayerNorm { x, gain, bias, mean_istd } => {
                let d = *node.shape.last().unwrap();
                let rows = out.len() / d;
                let xd = &self.nodes[x.0].data;
                let gd = &self.nodes[gain.0].data;
                let mut gx = vec![0.0; xd.len()];
                let mut ggain = vec![0.0; d];
                let mut gbias = vec![0.0; d];
                for r in 0..rows {
                    let mean = mean_istd[2 * r];
                    let istd = mean_istd[2 * r + 1];
                    let xr = &xd[r * d..(r + 1) * d];
                    let ur = &up[r * d..(r + 1) * d];
                    let mut mean_h = 0.0;
                    let mut mean_hx = 0.0;
                    for j in 0..d {
                        let xhat = (xr[j] - mean) * istd;
                        let h = ur[j] * gd[j];
                        mean_h += h;
                        mean_hx += h * xhat;
                        ggain[j] += ur[j] * xhat;
                        gbias[j] += ur[j];
                    }
                    mean_h /= d as f64;
                    mean_hx /= d as f64;
                    let gxr = &mut gx[r * d..(r + 1) * d];
                    for j in 0..d {
                        let xhat = (xr[j] - mean) * istd;
                        gxr[j] = istd * (ur[j] * gd[j] - mean_h - xhat * mean_hx);
                    }
                }
                vec![(*x, gx), (*gain, ggain), (*bias, gbias)]
            }
            Op::MeanAxis { x, axis } => {
                let sx = &self.nodes[x.0].shape;
                let outer: usize = sx[..*axis].iter().product();
                let len = sx[*axis];
                let inner: usize = sx[*axis + 1..].iter().product();
                let scale = 1.0 / len as f64;
                let mut g = vec![0.0; self.nodes[x.0].data.len()];
                for o in 0..outer {
                    let u = &up[o * inner..(o + 1) * inner];
                    for t in 0..len {
                        let base = (o * len + t) * inner;
                        for i in 0..inner {
                            g[base + i] = u[i] * scale;
                        }
                    }
                }
                vec![(*x, g)]
            }
            Op::SumAll(x) => {
                let n = self.nodes[x.0].data.len();
                vec![(*x, vec![up[0]; n])]
            }
            Op::MeanAll(x) => {
                let n = self.nodes[x.0].data.len();
                vec![(*x, vec![up[0] / n as f64; n])]
            }
            Op::Concat { xs, axis } => {
                let out_shape = &node.shape;
                let outer: usize = out_shape[..*axis].iter().product();
                let inner: usize = out_shape[*axis + 1..].iter().product();
                let axis_total = out_shape[*axis];
                let mut result = Vec::with_capacity(xs.len());
                let mut offset = 0;
                for &v in xs {
                    let len = self.nodes[v.0].shape[*axis];
                    let mut g = vec![0.0; self.nodes[v.0].data.len()];
                    for o in 0..outer {
                        let src_base = (o * axis_total + offset) * inner;
                        let dst_base = o * len * inner;
                        g[dst_base..dst_base + len * inner]
                            .copy_from_slice(&up[src_base..src_base + len * inner]);
                    }
                    offset += len;
                    result.push((v, g));
                }
                result
            }
            Op::SliceAxis { x, axis, start } => {
                let sx = &self.nodes[x.0].shape;
                let outer: usize = sx[..*axis].iter().product();
                let inner: usize = sx[*axis + 1..].iter().product();
                let len = node.shape[*axis];
                let mut g = vec![0.0; self.nodes[x.0].data.len()];
                for o in 0..outer {
                    let dst_base = (o * sx[*axis] + start) * inner;
                    let src_base = o * len * inner;
                    g[dst_base..dst_base + len * inner]
                        .copy_from_slice(&up[src_base..src_base + len * inner]);
                }
                vec![(*x, g)]
            }
            Op::Reshape(x) => vec![(*x, up.to_vec())],
            Op::Conv1d { x, w, b, stride } => {
                let sx = &self.nodes[x.0].shape;
                let sw = &self.nodes[w.0].shape;
                let (batch, cin, l) =
                    if sx.len() == 2 { (1, sx[0], sx[1]) } else { (sx[0], sx[1], sx[2]) };
                let (cout, _, k) = (sw[0], sw[1], sw[2]);
                let l_out = (l - k) / stride + 1;
                let xd = &self.nodes[x.0].data;
                let wd = &self.nodes[w.0].data;
                let mut gx = vec![0.0; xd.len()];
                let mut gw = vec![0.0; wd.len()];
                let mut gb = vec![0.0; cout];
                for bi in 0..batch {
                    let xb = &xd[bi * cin * l..(bi + 1) * cin * l];
                    let ub = &up[bi * cout * l_out..(bi + 1) * cout * l_out];
                    let gxb = &mut gx[bi * cin * l..(bi + 1) * cin * l];
                    for co in 0..cout {
                        for j in 0..l_out {
                            let u = ub[co * l_out + j];
                            if u == 0.0 {
                                continue;
                            }
                            gb[co] += u;
                            let s0 = j * stride;
                            for ci in 0..cin {
                                for p in 0..k {
                                    gw[co * cin * k + ci * k + p] += u * xb[ci * l + s0 + p];
                                    gxb[ci * l + s0 + p] += u * wd[co * cin * k + ci * k + p];
                                }
                            }
                        }
                    }
                }
                vec![(*x, gx), (*w, gw), (*b, gb)]
            }
            Op::CategoricalLogProb { logits, actions, logp } => {
                let n = self.nodes[logits.0].shape[1];
                let rows = actions.len();
                let mut g = vec![0.0; rows * n];
                for r in 0..rows {
                    let u = up[r];
                    for j in 0..n {
                        let p = logp[r * n + j].exp();
                        let indicator = if j == actions[r] { 1.0 } else { 0.0 };
                        g[r * n + j] = u * (indicator - p);
                    }
                }
                vec![(*logits, g)]
            }
            Op::Entropy { logits, logp } => {
                let n = self.nodes[logits.0].shape[1];
                let rows = out.len();
                let mut g = vec![0.0; rows * n];
                for r in 0..rows {
                    let u = up[r];
                    let h = out[r];
                    for j in 0..n {
                        let lp = logp[r * n + j];
                        g[r * n + j] = -u * lp.exp() * (lp + h);
                    }
                }
                vec![(*logits, g)]
            }
        }
    }
}
