//! Generalized advantage estimation over one rollout.

use crate::error::{PolicyError, Result};

/// Backward GAE recursion. `values` holds V(s_t) for each collected step,
/// `bootstrap` is V of the state after the last step, and a `true` in `dones`
/// cuts both the TD target and the advantage carry at that step. Returns raw
/// (advantages, returns) with returns = advantages + values; normalization is
/// the update's business.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let t_len = rewards.len();
    if values.len() != t_len {
        return Err(PolicyError::LengthMismatch {
            name: "values",
            expected: t_len,
            found: values.len(),
        });
    }
    if dones.len() != t_len {
        return Err(PolicyError::LengthMismatch {
            name: "dones",
            expected: t_len,
            found: dones.len(),
        });
    }
    let mut adv = vec![0.0; t_len];
    let mut carry = 0.0;
    for t in (0..t_len).rev() {
        let cont = if dones[t] { 0.0 } else { 1.0 };
        let next_v = if t + 1 == t_len { bootstrap } else { values[t + 1] };
        let delta = rewards[t] + gamma * next_v * cont - values[t];
        carry = delta + gamma * lambda * cont * carry;
        adv[t] = carry;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, ret))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_step_is_the_td_error() {
        let (adv, ret) = gae(&[1.0], &[0.5], &[false], 2.0, 0.99, 0.95).unwrap();
        let delta = 1.0 + 0.99 * 2.0 - 0.5;
        assert!((adv[0] - delta).abs() < 1e-15);
        assert!((ret[0] - (delta + 0.5)).abs() < 1e-15);
    }

    #[test]
    fn done_blocks_the_bootstrap() {
        let (adv, _) = gae(&[1.0], &[0.5], &[true], 100.0, 0.99, 0.95).unwrap();
        assert!((adv[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        assert!(matches!(
            gae(&[1.0, 2.0], &[0.5], &[false, false], 0.0, 0.99, 0.95),
            Err(PolicyError::LengthMismatch { name: "values", .. })
        ));
        assert!(matches!(
            gae(&[1.0, 2.0], &[0.5, 0.5], &[false], 0.0, 0.99, 0.95),
            Err(PolicyError::LengthMismatch { name: "dones", .. })
        ));
    }
}
