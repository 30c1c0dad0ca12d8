//! Imagination-based proximity shaping. The decoded human trajectories from
//! the executed action's imagined latent feed a hinge on distance-to-robot,
//! and the hinge total is folded into the step's reward terms.

use serde::{Deserialize, Serialize};
use socialnav_sim::RewardTerms;
use world_model::{FUTURE_STEPS, TRACKED_HUMANS};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapingConfig {
    /// Hinge radius in meters; imagined humans farther than this contribute
    /// nothing.
    pub d_safe: f64,
    /// Weight of the shaping term in the total reward.
    pub w_traj: f64,
    /// Per-step decay over the imagined horizon.
    pub gamma_p: f64,
}

impl Default for ShapingConfig {
    fn default() -> Self {
        ShapingConfig { d_safe: 1.0, w_traj: 0.1, gamma_p: 0.9 }
    }
}

/// Adds the imagined-proximity penalty to `terms`. `traj` holds predicted
/// robot-frame positions per tracked slot and future step; `validity` is the
/// slot bitmask. The penalty averages the decayed hinge over every
/// valid (human, step) pair, so a frame with no tracked humans contributes
/// exactly zero.
pub fn shape_reward(
    terms: RewardTerms,
    traj: &[[[f64; 2]; FUTURE_STEPS]; TRACKED_HUMANS],
    validity: u8,
    cfg: &ShapingConfig,
) -> RewardTerms {
    let valid_humans = (0..TRACKED_HUMANS).filter(|h| validity & (1 << h) != 0).count();
    if valid_humans == 0 {
        return terms.with_traj(0.0);
    }
    let mut acc = 0.0;
    for h in 0..TRACKED_HUMANS {
        if validity & (1 << h) == 0 {
            continue;
        }
        let mut decay = 1.0;
        for k in 0..FUTURE_STEPS {
            let [x, y] = traj[h][k];
            let dist = (x * x + y * y).sqrt();
            acc += decay * (cfg.d_safe - dist).max(0.0);
            decay *= cfg.gamma_p;
        }
    }
    let pairs = (valid_humans * FUTURE_STEPS) as f64;
    terms.with_traj(cfg.w_traj * acc / pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_terms() -> RewardTerms {
        RewardTerms::new(0.05, 0.0, 0.0)
    }

    #[test]
    fn one_human_sitting_on_the_robot_hits_the_full_decay_sum() {
        // single valid human predicted at the robot's own position for all
        // four steps: hinge is 1 each step, so the sum is the decay series
        // and the average divides by the 4 pairs
        let traj = [[[0.0, 0.0]; FUTURE_STEPS]; TRACKED_HUMANS];
        let cfg = ShapingConfig::default();
        let out = shape_reward(base_terms(), &traj, 0b0001, &cfg);
        let want = 0.1 * (1.0 + 0.9 + 0.81 + 0.729) / 4.0;
        assert!((out.r_traj - want).abs() < 1e-12, "got {}", out.r_traj);
        assert!((want - 0.0860).abs() < 5e-5);
    }

    #[test]
    fn distant_humans_contribute_nothing() {
        let traj = [[[5.0, 0.0]; FUTURE_STEPS]; TRACKED_HUMANS];
        let out = shape_reward(base_terms(), &traj, 0b1111, &ShapingConfig::default());
        assert_eq!(out.r_traj, 0.0);
        assert_eq!(out.total, base_terms().total);
    }

    #[test]
    fn no_valid_slots_means_zero_penalty() {
        let traj = [[[0.0, 0.0]; FUTURE_STEPS]; TRACKED_HUMANS];
        let out = shape_reward(base_terms(), &traj, 0, &ShapingConfig::default());
        assert_eq!(out.r_traj, 0.0);
    }

    #[test]
    fn invalid_slots_are_ignored_even_when_close() {
        // slot 0 valid and far, slot 1 invalid and on top of the robot
        let mut traj = [[[9.0, 0.0]; FUTURE_STEPS]; TRACKED_HUMANS];
        traj[1] = [[0.0, 0.0]; FUTURE_STEPS];
        let out = shape_reward(base_terms(), &traj, 0b0001, &ShapingConfig::default());
        assert_eq!(out.r_traj, 0.0);
    }

    #[test]
    fn penalty_scales_linearly_with_the_weight() {
        let traj = [[[0.3, 0.4]; FUTURE_STEPS]; TRACKED_HUMANS];
        let mut cfg = ShapingConfig::default();
        let r1 = shape_reward(base_terms(), &traj, 0b0011, &cfg).r_traj;
        cfg.w_traj *= 3.0;
        let r3 = shape_reward(base_terms(), &traj, 0b0011, &cfg).r_traj;
        assert!((r3 - 3.0 * r1).abs() < 1e-12);
        assert!(r1 > 0.0);
    }

    #[test]
    fn total_reward_tracks_the_penalty_exactly() {
        let traj = [[[0.1, 0.2]; FUTURE_STEPS]; TRACKED_HUMANS];
        let terms = RewardTerms::new(0.2, 2.5, 0.3);
        let out = shape_reward(terms, &traj, 0b0111, &ShapingConfig::default());
        assert!(out.r_traj > 0.0);
        assert_eq!(out.total, out.r_goal + out.r_succ - out.r_coll - out.r_traj);
    }
}
