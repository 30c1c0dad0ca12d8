//! Loss compositions built from graph primitives.

use crate::error::{GradError, Result};
use crate::graph::{Graph, Var};

/// Mean squared error over all elements: mean((a - b)^2).
pub fn mse(g: &mut Graph, a: Var, b: Var) -> Result<Var> {
    let d = g.sub(a, b)?;
    let sq = g.mul(d, d)?;
    Ok(g.mean_all(sq))
}

/// MSE averaged over elements where `mask` is 1.0. The mask is a constant
/// with the same element count as `a` (or a broadcastable suffix). Errors if
/// the mask selects nothing.
pub fn masked_mse(g: &mut Graph, a: Var, b: Var, mask: Var) -> Result<Var> {
    let count: f64 = g.value(mask).iter().sum();
    if count == 0.0 {
        return Err(GradError::EmptyMask);
    }
    let d = g.sub(a, b)?;
    let sq = g.mul(d, d)?;
    let weighted = g.mul(sq, mask)?;
    let total = g.sum_all(weighted);
    // Per-record mask entries weight whole rows; the effective element count
    // is sum(mask) * (elements per mask entry).
    let per_entry = g.value(a).len() / g.value(mask).len();
    Ok(g.scale(total, 1.0 / (count * per_entry as f64)))
}
