//! SGD and Adam over a [`ParamMap`], plus global gradient-norm clipping.

use crate::error::{GradError, Result};
use crate::params::ParamMap;

#[derive(Debug, Clone, Copy)]
enum Kind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

pub struct OptimizerState {
    kind: Kind,
    lr: f64,
    t: u64,
    // First/second moment buffers keyed by parameter name, created lazily.
    slots: Vec<(String, Vec<f64>, Vec<f64>)>,
}

impl OptimizerState {
    pub fn sgd(lr: f64) -> Self {
        OptimizerState { kind: Kind::Sgd, lr, t: 0, slots: Vec::new() }
    }

    pub fn adam(lr: f64) -> Self {
        OptimizerState {
            kind: Kind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 },
            lr,
            t: 0,
            slots: Vec::new(),
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// Applies one update. Every trainable parameter must carry a gradient;
    /// a missing one means harvest was skipped and is reported by name.
    pub fn step(&mut self, params: &mut ParamMap) -> Result<()> {
        self.t += 1;
        let t = self.t;
        for (name, tensor) in params.iter_mut() {
            if !tensor.requires_grad_flag() {
                continue;
            }
            if tensor.grad().is_none() {
                return Err(GradError::MissingGrad(name.to_string()));
            }
            match self.kind {
                Kind::Sgd => {
                    let lr = self.lr;
                    let grad = tensor.grad().unwrap().to_vec();
                    let data = tensor.data_mut();
                    for (p, g) in data.iter_mut().zip(&grad) {
                        *p -= lr * g;
                    }
                }
                Kind::Adam { beta1, beta2, eps } => {
                    let slot = match self.slots.iter_mut().find(|(n, _, _)| n == name) {
                        Some(s) => s,
                        None => {
                            self.slots.push((
                                name.to_string(),
                                vec![0.0; tensor.numel()],
                                vec![0.0; tensor.numel()],
                            ));
                            self.slots.last_mut().unwrap()
                        }
                    };
                    let bc1 = 1.0 - beta1.powi(t as i32);
                    let bc2 = 1.0 - beta2.powi(t as i32);
                    let lr = self.lr;
                    let grad = tensor.grad().unwrap().to_vec();
                    let data = tensor.data_mut();
                    for i in 0..data.len() {
                        let g = grad[i];
                        slot.1[i] = beta1 * slot.1[i] + (1.0 - beta1) * g;
                        slot.2[i] = beta2 * slot.2[i] + (1.0 - beta2) * g * g;
                        let mhat = slot.1[i] / bc1;
                        let vhat = slot.2[i] / bc2;
                        data[i] -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
            if tensor.data().iter().any(|v| !v.is_finite()) {
                return Err(GradError::NonFinite("parameter update"));
            }
        }
        Ok(())
    }
}

/// Scales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_grad_norm(params: &mut ParamMap, max_norm: f64) -> f64 {
    let mut sq = 0.0;
    for (_, t) in params.iter() {
        if let Some(g) = t.grad() {
            for &v in g {
                sq += v * v;
            }
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for (_, t) in params.iter_mut() {
            if let Some(g) = t.grad_mut() {
                g.iter_mut().for_each(|v| *v *= scale);
            }
        }
    }
    norm
}
