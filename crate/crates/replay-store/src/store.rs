//! In-memory store plus the episode directory. Records live in one flat
//! vector; episodes are contiguous runs indexed by the directory.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{ReplayError, Result};
use crate::record::TransitionRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Heldout,
}

/// Knuth multiplicative hash of the episode id; the low 10% of the 32-bit
/// range is held out. Keyed on the id alone so the assignment survives
/// save/load without being stored.
pub fn split_of(episode_id: u64) -> Split {
    let hash = episode_id.wrapping_mul(2654435761) as u32;
    if (hash as u64) * 10 < 1u64 << 32 {
        Split::Heldout
    } else {
        Split::Train
    }
}

#[derive(Clone, Debug)]
pub(crate) struct EpisodeEntry {
    pub id: u64,
    /// First record's index into the flat record vector.
    pub start: usize,
    pub len: usize,
}

#[derive(Default)]
pub struct ReplayStore {
    records: Vec<TransitionRecord>,
    episodes: Vec<EpisodeEntry>,
}

impl ReplayStore {
    pub fn new() -> ReplayStore {
        ReplayStore::default()
    }

    pub fn append_episode(&mut self, records: Vec<TransitionRecord>) -> Result<u64> {
        let Some(first) = records.first() else {
            return Err(ReplayError::EmptyEpisode);
        };
        let id = first.episode_id;
        if self.episodes.iter().any(|e| e.id == id) {
            return Err(ReplayError::DuplicateEpisode { id });
        }
        for (i, rec) in records.iter().enumerate() {
            if rec.episode_id != id {
                return Err(ReplayError::MixedEpisodeIds { expected: id, found: rec.episode_id });
            }
            if rec.t != i as u32 {
                return Err(ReplayError::NonContiguousT { episode: id, index: i, t: rec.t });
            }
            rec.validate()?;
        }
        self.episodes.push(EpisodeEntry { id, start: self.records.len(), len: records.len() });
        self.records.extend(records);
        Ok(id)
    }

    pub fn record_count(&self) -> usize {
        self.records.len()
    }

    pub fn episode_count(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn episode_ids(&self, split: Split) -> Vec<u64> {
        self.episodes.iter().filter(|e| split_of(e.id) == split).map(|e| e.id).collect()
    }

    pub fn episode(&self, id: u64) -> Option<&[TransitionRecord]> {
        self.episodes
            .iter()
            .find(|e| e.id == id)
            .map(|e| &self.records[e.start..e.start + e.len])
    }

    pub(crate) fn entries(&self) -> &[EpisodeEntry] {
        &self.episodes
    }

    pub(crate) fn raw_records(&self) -> &[TransitionRecord] {
        &self.records
    }

    pub(crate) fn from_parts(
        records: Vec<TransitionRecord>,
        episodes: Vec<EpisodeEntry>,
    ) -> ReplayStore {
        ReplayStore { records, episodes }
    }

    /// Starts of every window of `window` records that stays inside one
    /// episode and is free of done flags before its last position.
    fn valid_starts(&self, split: Split, window: usize) -> Vec<usize> {
        let mut starts = Vec::new();
        for e in &self.episodes {
            if split_of(e.id) != split || e.len < window {
                continue;
            }
            for s in e.start..=e.start + e.len - window {
                if self.records[s..s + window - 1].iter().all(|r| !r.done) {
                    starts.push(s);
                }
            }
        }
        starts
    }

    /// Draws `batch` windows uniformly (with replacement) over all valid
    /// start positions in the split. Deterministic in `seed`.
    pub fn sample_windows(
        &self,
        split: Split,
        batch: usize,
        window: usize,
        seed: u64,
    ) -> Result<Vec<&[TransitionRecord]>> {
        let starts = self.valid_starts(split, window);
        if starts.is_empty() {
            return Err(ReplayError::NoWindows { window });
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        Ok((0..batch)
            .map(|_| {
                let s = starts[rng.gen_range(0..starts.len())];
                &self.records[s..s + window]
            })
            .collect())
    }

    pub fn window_count(&self, split: Split, window: usize) -> usize {
        self.valid_starts(split, window).len()
    }

    pub fn stats(&self, split: Split) -> StoreStats {
        let mut stats = StoreStats::default();
        for e in &self.episodes {
            if split_of(e.id) != split {
                continue;
            }
            stats.episodes += 1;
            stats.transitions += e.len as u64;
            for rec in &self.records[e.start..e.start + e.len] {
                stats.action_histogram[rec.action as usize] += 1;
            }
        }
        stats.mean_episode_length = if stats.episodes == 0 {
            0.0
        } else {
            stats.transitions as f64 / stats.episodes as f64
        };
        stats
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StoreStats {
    pub episodes: u64,
    pub transitions: u64,
    pub action_histogram: [u64; 4],
    pub mean_episode_length: f64,
}

impl fmt::Display for StoreStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "episodes={}", self.episodes)?;
        writeln!(f, "transitions={}", self.transitions)?;
        writeln!(f, "actions_forward={}", self.action_histogram[0])?;
        writeln!(f, "actions_turn_left={}", self.action_histogram[1])?;
        writeln!(f, "actions_turn_right={}", self.action_histogram[2])?;
        writeln!(f, "actions_stop={}", self.action_histogram[3])?;
        write!(f, "mean_episode_length={:.3}", self.mean_episode_length)
    }
}
