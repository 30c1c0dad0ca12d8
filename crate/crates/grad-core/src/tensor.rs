//! Dense row-major `f64` tensor. Parameters keep their gradient buffer here,
//! outside any graph; graphs copy values in and accumulate gradients back out.

use crate::error::{GradError, Result};
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() || shape.iter().any(|&d| d == 0) {
            return Err(GradError::BadShape { shape, len: data.len() });
        }
        Ok(Tensor { shape, data, requires_grad: false, grad: None })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Tensor { shape, data: vec![0.0; numel], requires_grad: false, grad: None }
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Self {
        let numel: usize = shape.iter().product();
        Tensor { shape, data: vec![value; numel], requires_grad: false, grad: None }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { shape: vec![1], data: vec![value], requires_grad: false, grad: None }
    }

    /// Uniform init in [-scale, scale].
    pub fn uniform<R: Rng>(shape: Vec<usize>, scale: f64, rng: &mut R) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| rng.gen_range(-scale..scale)).collect();
        Tensor { shape, data, requires_grad: false, grad: None }
    }

    /// Gaussian init scaled by 1/sqrt(fan_in), where fan_in is the last dim
    /// for matrices laid out as (in, out) and the full size for vectors.
    pub fn fan_in_init<R: Rng>(shape: Vec<usize>, rng: &mut R) -> Self {
        let numel: usize = shape.iter().product();
        let fan_in = if shape.len() >= 2 { shape[shape.len() - 2] } else { shape[0] };
        let s = 1.0 / (fan_in as f64).sqrt();
        let data = (0..numel)
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                z * s
            })
            .collect();
        Tensor { shape, data, requires_grad: false, grad: None }
    }

    /// (rows, cols) matrix with orthonormal columns (rows >= cols), built by
    /// Gram-Schmidt on Gaussian draws.
    pub fn orthogonal_cols<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        assert!(rows >= cols);
        let mut cols_v: Vec<Vec<f64>> = Vec::with_capacity(cols);
        while cols_v.len() < cols {
            let mut v: Vec<f64> = (0..rows).map(|_| rng.sample(StandardNormal)).collect();
            for u in &cols_v {
                let d = crate::kernels::dot(&v, u);
                for i in 0..rows {
                    v[i] -= d * u[i];
                }
            }
            let norm = crate::kernels::dot(&v, &v).sqrt();
            if norm < 1e-8 {
                continue; // degenerate draw, resample
            }
            for x in v.iter_mut() {
                *x /= norm;
            }
            cols_v.push(v);
        }
        let mut data = vec![0.0; rows * cols];
        for (j, col) in cols_v.iter().enumerate() {
            for i in 0..rows {
                data[i * cols + j] = col[i];
            }
        }
        Tensor { shape: vec![rows, cols], data, requires_grad: false, grad: None }
    }

    pub fn requires_grad(mut self, flag: bool) -> Self {
        self.requires_grad = flag;
        if !flag {
            self.grad = None;
        }
        self
    }

    pub fn requires_grad_flag(&self) -> bool {
        self.requires_grad
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [f64]> {
        self.grad.as_deref_mut()
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `g` into the gradient buffer. No-op unless `requires_grad`.
    pub fn accumulate_grad(&mut self, g: &[f64]) {
        if !self.requires_grad {
            return;
        }
        assert_eq!(g.len(), self.data.len());
        let buf = self.grad.get_or_insert_with(|| vec![0.0; self.data.len()]);
        for (dst, src) in buf.iter_mut().zip(g) {
            *dst += src;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn shape_product_must_match() {
        assert!(Tensor::from_vec(vec![2, 2], vec![1.0, 2.0, 3.0]).is_err());
        assert!(Tensor::from_vec(vec![3], vec![1.0, 2.0, 3.0]).is_ok());
    }

    #[test]
    fn no_grad_without_requires_grad() {
        let mut t = Tensor::zeros(vec![2]);
        t.accumulate_grad(&[1.0, 1.0]);
        assert!(t.grad().is_none());
        let mut t = t.requires_grad(true);
        t.accumulate_grad(&[1.0, 2.0]);
        t.accumulate_grad(&[1.0, 2.0]);
        assert_eq!(t.grad().unwrap(), &[2.0, 4.0]);
    }

    #[test]
    fn orthogonal_columns_are_orthonormal() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let t = Tensor::orthogonal_cols(32, 8, &mut rng);
        for a in 0..8 {
            for b in 0..8 {
                let mut d = 0.0;
                for i in 0..32 {
                    d += t.data()[i * 8 + a] * t.data()[i * 8 + b];
                }
                let expect = if a == b { 1.0 } else { 0.0 };
                assert!((d - expect).abs() < 1e-10, "col {a} . col {b} = {d}");
            }
        }
    }
}
