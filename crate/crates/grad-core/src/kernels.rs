//! Raw `f64` math kernels shared by the graph operations and the tape-free
//! inference paths. Keeping one implementation of each routine guarantees the
//! two paths produce bitwise-identical values.

pub const GELU_COEFF: f64 = 0.7978845608;
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// out += a(m,k) * b(k,n), row-major.
pub fn matmul_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for j in 0..n {
                orow[j] += aip * brow[j];
            }
        }
    }
}

/// out += a(m,k) * b(n,k)^T, row-major. Row-by-row dot products.
pub fn matmul_nt(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for p in 0..k {
                acc += arow[p] * brow[p];
            }
            orow[j] += acc;
        }
    }
}

/// out += a(k,m)^T * b(k,n), row-major.
pub fn matmul_tn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for p in 0..k {
        let arow = &a[p * m..(p + 1) * m];
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let api = arow[i];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += api * brow[j];
            }
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_COEFF * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_COEFF * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let du = GELU_COEFF * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// Masked softmax over rows of length `n`. Masked entries are exactly zero;
/// each row is stabilized by subtracting its unmasked maximum.
/// Returns the index of a fully masked row if one exists.
pub fn softmax_masked_rows(x: &[f64], mask: &[bool], n: usize, out: &mut [f64]) -> Option<usize> {
    debug_assert_eq!(x.len(), out.len());
    debug_assert_eq!(x.len() % n, 0);
    let rows = x.len() / n;
    let mask_rows = mask.len() / n;
    for r in 0..rows {
        let xr = &x[r * n..(r + 1) * n];
        let mr = &mask[(r % mask_rows) * n..(r % mask_rows + 1) * n];
        let or = &mut out[r * n..(r + 1) * n];
        let mut mx = f64::NEG_INFINITY;
        for j in 0..n {
            if mr[j] && xr[j] > mx {
                mx = xr[j];
            }
        }
        if mx == f64::NEG_INFINITY {
            return Some(r);
        }
        let mut sum = 0.0;
        for j in 0..n {
            if mr[j] {
                let e = (xr[j] - mx).exp();
                or[j] = e;
                sum += e;
            } else {
                or[j] = 0.0;
            }
        }
        let inv = 1.0 / sum;
        for v in or.iter_mut() {
            *v *= inv;
        }
    }
    None
}

/// Per-row layer norm with affine transform, last axis of length `d`.
/// Also writes the per-row mean and inverse std used, for the backward pass.
pub fn layer_norm_rows(
    x: &[f64],
    gain: &[f64],
    bias: &[f64],
    d: usize,
    out: &mut [f64],
    mean_istd: &mut [f64],
) {
    let rows = x.len() / d;
    debug_assert_eq!(mean_istd.len(), 2 * rows);
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let or = &mut out[r * d..(r + 1) * d];
        let mut mean = 0.0;
        for &v in xr {
            mean += v;
        }
        mean /= d as f64;
        let mut var = 0.0;
        for &v in xr {
            let c = v - mean;
            var += c * c;
        }
        var /= d as f64;
        let istd = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        for j in 0..d {
            or[j] = (xr[j] - mean) * istd * gain[j] + bias[j];
        }
        mean_istd[2 * r] = mean;
        mean_istd[2 * r + 1] = istd;
    }
}

/// 1D valid cross-correlation: x(cin,l) with w(cout,cin,k), given stride.
/// out has shape (cout, l_out) with l_out = (l - k) / stride + 1.
pub fn conv1d_single(
    x: &[f64],
    w: &[f64],
    b: &[f64],
    cin: usize,
    l: usize,
    cout: usize,
    k: usize,
    stride: usize,
    out: &mut [f64],
) {
    let l_out = (l - k) / stride + 1;
    debug_assert_eq!(out.len(), cout * l_out);
    for co in 0..cout {
        let orow = &mut out[co * l_out..(co + 1) * l_out];
        for (j, o) in orow.iter_mut().enumerate() {
            let start = j * stride;
            let mut acc = b[co];
            for ci in 0..cin {
                let xr = &x[ci * l + start..ci * l + start + k];
                let wr = &w[co * cin * k + ci * k..co * cin * k + (ci + 1) * k];
                for p in 0..k {
                    acc += xr[p] * wr[p];
                }
            }
            *o = acc;
        }
    }
}

/// Log-softmax of one row.
pub fn log_softmax_row(x: &[f64], out: &mut [f64]) {
    let mx = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for &v in x {
        sum += (v - mx).exp();
    }
    let lse = mx + sum.ln();
    for (o, &v) in out.iter_mut().zip(x) {
        *o = v - lse;
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}
