//! Finite-difference gradient checking. Used by the test suites to verify
//! every differentiable op against central differences.

use crate::graph::{Graph, Var};
use crate::tensor::Tensor;

/// Builds the scalar loss from leaf tensors. Returns (loss, leaf vars).
pub type BuildFn<'a> = &'a mut dyn FnMut(&mut Graph, &[Var]) -> Var;

/// Compares analytic gradients against central differences for every
/// coordinate of every input. Returns the worst relative error, defined as
/// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
pub fn grad_check(inputs: &[Tensor], eps: f64, build: BuildFn) -> f64 {
    let coords: Vec<Vec<usize>> =
        inputs.iter().map(|t| (0..t.numel()).collect()).collect();
    grad_check_coords(inputs, &coords, eps, build)
}

/// Same as [`grad_check`] but only perturbs the listed coordinates per input.
/// Useful for large inputs where checking every coordinate is too slow.
pub fn grad_check_coords(
    inputs: &[Tensor],
    coords: &[Vec<usize>],
    eps: f64,
    build: BuildFn,
) -> f64 {
    assert_eq!(inputs.len(), coords.len());
    let leaves: Vec<Tensor> = inputs.iter().map(|t| t.clone().requires_grad(true)).collect();

    // Analytic pass.
    let mut g = Graph::new();
    let vars: Vec<Var> = leaves.iter().map(|t| g.leaf(t)).collect();
    let loss = build(&mut g, &vars);
    assert_eq!(g.value(loss).len(), 1, "grad_check loss must be scalar");
    g.backward(loss).expect("backward failed during grad check");
    let analytic: Vec<Vec<f64>> =
        vars.iter().map(|&v| g.grad(v).expect("leaf missing grad").to_vec()).collect();

    let mut eval = |perturbed: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| g.leaf(t)).collect();
        let loss = build(&mut g, &vars);
        g.value(loss)[0]
    };

    let mut worst = 0.0_f64;
    for (ti, coord_list) in coords.iter().enumerate() {
        for &ci in coord_list {
            let mut plus = leaves.clone();
            plus[ti].data_mut()[ci] += eps;
            let f_plus = eval(&plus);
            let mut minus = leaves.clone();
            minus[ti].data_mut()[ci] -= eps;
            let f_minus = eval(&minus);
            let numeric = (f_plus - f_minus) / (2.0 * eps);
            let a = analytic[ti][ci];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            if rel > worst {
                worst = rel;
            }
        }
    }
    worst
}
