//! One stored transition. Values are f32 on disk and in memory; training
//! code widens to f64 when it builds batches.

use crate::error::{ReplayError, Result};

pub const DEPTH_RAYS: usize = 64;
/// Nearest humans whose futures a record carries.
pub const TRACKED_HUMANS: usize = 4;
/// Future positions stored per tracked human.
pub const FUTURE_STEPS: usize = 4;

/// Fixed on-disk width: id + t + depth + action + reward + pose + futures
/// + validity + done.
pub const RECORD_BYTES: usize =
    8 + 4 + DEPTH_RAYS * 4 + 1 + 4 + 12 + TRACKED_HUMANS * FUTURE_STEPS * 2 * 4 + 1 + 1;

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionRecord {
    pub episode_id: u64,
    pub t: u32,
    /// Normalized depth scan in [0, 1].
    pub depth: [f32; DEPTH_RAYS],
    /// Action executed at t.
    pub action: u8,
    /// r_goal + r_succ - r_coll; shaping is excluded on purpose so the
    /// reward head regresses a quantity independent of the model itself.
    pub reward_task: f32,
    /// World pose (x, y, heading) when the observation was taken.
    pub pose: [f32; 3],
    /// Future positions of the tracked humans in this robot's frame,
    /// indexed [human][step][xy].
    pub human_futures: [[[f32; 2]; FUTURE_STEPS]; TRACKED_HUMANS],
    /// Bit i set iff tracked human slot i held a real human.
    pub validity: u8,
    pub done: bool,
}

impl TransitionRecord {
    pub fn validate(&self) -> Result<()> {
        if self.action > 3 {
            return Err(ReplayError::BadAction { value: self.action });
        }
        if self.validity >= 1 << TRACKED_HUMANS {
            return Err(ReplayError::BadValidity { value: self.validity });
        }
        Ok(())
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.episode_id.to_le_bytes());
        out.extend_from_slice(&self.t.to_le_bytes());
        for d in &self.depth {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.push(self.action);
        out.extend_from_slice(&self.reward_task.to_le_bytes());
        for p in &self.pose {
            out.extend_from_slice(&p.to_le_bytes());
        }
        for human in &self.human_futures {
            for step in human {
                out.extend_from_slice(&step[0].to_le_bytes());
                out.extend_from_slice(&step[1].to_le_bytes());
            }
        }
        out.push(self.validity);
        out.push(self.done as u8);
    }

    pub fn read_from(buf: &[u8]) -> Result<TransitionRecord> {
        if buf.len() < RECORD_BYTES {
            return Err(ReplayError::Truncated { needed: RECORD_BYTES - buf.len() });
        }
        let mut at = 0usize;
        let mut take = |n: usize| {
            let s = &buf[at..at + n];
            at += n;
            s
        };
        let episode_id = u64::from_le_bytes(take(8).try_into().unwrap());
        let t = u32::from_le_bytes(take(4).try_into().unwrap());
        let mut depth = [0f32; DEPTH_RAYS];
        for d in depth.iter_mut() {
            *d = f32::from_le_bytes(take(4).try_into().unwrap());
        }
        let action = take(1)[0];
        let reward_task = f32::from_le_bytes(take(4).try_into().unwrap());
        let mut pose = [0f32; 3];
        for p in pose.iter_mut() {
            *p = f32::from_le_bytes(take(4).try_into().unwrap());
        }
        let mut human_futures = [[[0f32; 2]; FUTURE_STEPS]; TRACKED_HUMANS];
        for human in human_futures.iter_mut() {
            for step in human.iter_mut() {
                step[0] = f32::from_le_bytes(take(4).try_into().unwrap());
                step[1] = f32::from_le_bytes(take(4).try_into().unwrap());
            }
        }
        let validity = take(1)[0];
        let done = take(1)[0] != 0;
        debug_assert_eq!(at, RECORD_BYTES);
        Ok(TransitionRecord {
            episode_id,
            t,
            depth,
            action,
            reward_task,
            pose,
            human_futures,
            validity,
            done,
        })
    }

    /// Bitwise equality across every field, for round-trip checks where
    /// PartialEq would treat -0.0 == 0.0 and NaN != NaN.
    pub fn bits_equal(&self, other: &TransitionRecord) -> bool {
        let mut a = Vec::with_capacity(RECORD_BYTES);
        let mut b = Vec::with_capacity(RECORD_BYTES);
        self.write_to(&mut a);
        other.write_to(&mut b);
        a == b
    }
}
