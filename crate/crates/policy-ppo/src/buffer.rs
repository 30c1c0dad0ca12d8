//! Rollout storage. Each env fills its own lane during collection; sealing
//! runs GAE per lane and freezes the buffer. Advantages and returns exist
//! only on a sealed buffer, and the PPO update refuses anything else.

use socialnav_sim::RewardTerms;

use crate::error::{PolicyError, Result};
use crate::gae::gae;
use crate::{AUX_LEN, HIDDEN_DIM, LOOKAHEAD_DIM, RAY_COUNT};

/// Everything the update needs to replay one collected step.
#[derive(Clone)]
pub struct StepSample {
    pub depth: Vec<f64>,
    pub aux: Vec<f64>,
    /// Recurrent state the policy held when it saw this observation.
    pub hidden: Vec<f64>,
    pub lookahead: Vec<f64>,
    pub action: u8,
    pub log_prob: f64,
    pub value: f64,
    pub reward: RewardTerms,
    pub done: bool,
}

/// GAE outputs, env-major like the flattened sample order.
pub struct SealedRollout {
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

pub struct RolloutBuffer {
    n_envs: usize,
    rollout_len: usize,
    lanes: Vec<Vec<StepSample>>,
    sealed: Option<SealedRollout>,
}

impl RolloutBuffer {
    pub fn new(n_envs: usize, rollout_len: usize) -> Self {
        RolloutBuffer {
            n_envs,
            rollout_len,
            lanes: (0..n_envs).map(|_| Vec::with_capacity(rollout_len)).collect(),
            sealed: None,
        }
    }

    pub fn n_envs(&self) -> usize {
        self.n_envs
    }

    pub fn rollout_len(&self) -> usize {
        self.rollout_len
    }

    pub fn len(&self) -> usize {
        self.lanes.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn push(&mut self, env: usize, s: StepSample) -> Result<()> {
        if self.sealed.is_some() {
            return Err(PolicyError::AlreadySealed);
        }
        let lane = &mut self.lanes[env];
        if lane.len() >= self.rollout_len {
            return Err(PolicyError::BufferFull { env, len: lane.len() });
        }
        for (name, want, got) in [
            ("depth", RAY_COUNT, s.depth.len()),
            ("aux", AUX_LEN, s.aux.len()),
            ("hidden", HIDDEN_DIM, s.hidden.len()),
            ("lookahead", LOOKAHEAD_DIM, s.lookahead.len()),
        ] {
            if want != got {
                return Err(PolicyError::LengthMismatch { name, expected: want, found: got });
            }
        }
        let assembled = s.reward.r_goal + s.reward.r_succ - s.reward.r_coll - s.reward.r_traj;
        if s.reward.total.to_bits() != assembled.to_bits() {
            return Err(PolicyError::RewardAssembly);
        }
        lane.push(s);
        Ok(())
    }

    /// Sample at flat position `i` in env-major order.
    pub fn flat(&self, i: usize) -> &StepSample {
        &self.lanes[i / self.rollout_len][i % self.rollout_len]
    }

    pub fn lane(&self, env: usize) -> &[StepSample] {
        &self.lanes[env]
    }

    /// Runs GAE per lane against the given bootstrap values and freezes the
    /// buffer. Every lane must be exactly full.
    pub fn seal(&mut self, bootstrap: &[f64], gamma: f64, lambda: f64) -> Result<()> {
        if self.sealed.is_some() {
            return Err(PolicyError::AlreadySealed);
        }
        if bootstrap.len() != self.n_envs {
            return Err(PolicyError::LengthMismatch {
                name: "bootstrap",
                expected: self.n_envs,
                found: bootstrap.len(),
            });
        }
        for (env, lane) in self.lanes.iter().enumerate() {
            if lane.len() != self.rollout_len {
                return Err(PolicyError::BufferShort {
                    env,
                    len: lane.len(),
                    expected: self.rollout_len,
                });
            }
        }
        let total = self.n_envs * self.rollout_len;
        let mut advantages = Vec::with_capacity(total);
        let mut returns = Vec::with_capacity(total);
        for (env, lane) in self.lanes.iter().enumerate() {
            let rewards: Vec<f64> = lane.iter().map(|s| s.reward.total).collect();
            let values: Vec<f64> = lane.iter().map(|s| s.value).collect();
            let dones: Vec<bool> = lane.iter().map(|s| s.done).collect();
            let (a, r) = gae(&rewards, &values, &dones, bootstrap[env], gamma, lambda)?;
            advantages.extend(a);
            returns.extend(r);
        }
        self.sealed = Some(SealedRollout { advantages, returns });
        Ok(())
    }

    pub fn sealed(&self) -> Result<&SealedRollout> {
        self.sealed.as_ref().ok_or(PolicyError::Unsealed)
    }

    /// Empties the buffer for the next collection phase.
    pub fn reset(&mut self) {
        for lane in &mut self.lanes {
            lane.clear();
        }
        self.sealed = None;
    }
}
