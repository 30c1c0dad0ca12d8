//! "NTRB" file layout: magic, version, record count, fixed-width records,
//! then an index block mapping episode ids to record ranges. Everything is
//! little-endian.

use std::fs;
use std::path::Path;

use crate::error::{ReplayError, Result};
use crate::record::{TransitionRecord, RECORD_BYTES};
use crate::store::{EpisodeEntry, ReplayStore};

pub const MAGIC: [u8; 4] = *b"NTRB";
pub const VERSION: u32 = 1;

struct Cursor<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.at < n {
            return Err(ReplayError::Truncated { needed: n - (self.buf.len() - self.at) });
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl ReplayStore {
    pub fn save(&self, path: &Path) -> Result<()> {
        let records = self.raw_records();
        let entries = self.entries();
        let mut buf =
            Vec::with_capacity(16 + records.len() * RECORD_BYTES + 8 + entries.len() * 24);
        buf.extend_from_slice(&MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&(records.len() as u64).to_le_bytes());
        for rec in records {
            rec.write_to(&mut buf);
        }
        buf.extend_from_slice(&(entries.len() as u64).to_le_bytes());
        for e in entries {
            buf.extend_from_slice(&e.id.to_le_bytes());
            buf.extend_from_slice(&(e.start as u64).to_le_bytes());
            buf.extend_from_slice(&(e.len as u64).to_le_bytes());
        }
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<ReplayStore> {
        let bytes = fs::read(path)?;
        let mut cur = Cursor { buf: &bytes, at: 0 };

        let magic: [u8; 4] = cur.take(4)?.try_into().unwrap();
        if magic != MAGIC {
            return Err(ReplayError::BadMagic(magic));
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(ReplayError::Version { found: version });
        }
        let n_records = cur.u64()? as usize;
        let mut records = Vec::with_capacity(n_records);
        for _ in 0..n_records {
            records.push(TransitionRecord::read_from(cur.take(RECORD_BYTES)?)?);
        }
        let n_episodes = cur.u64()? as usize;
        let mut episodes = Vec::with_capacity(n_episodes);
        for _ in 0..n_episodes {
            let id = cur.u64()?;
            let start = cur.u64()? as usize;
            let len = cur.u64()? as usize;
            episodes.push(EpisodeEntry { id, start, len });
        }
        if cur.at != bytes.len() {
            return Err(ReplayError::TrailingBytes { extra: bytes.len() - cur.at });
        }

        // The index must tile the record vector exactly, and the records it
        // points at must agree on ids and t-contiguity.
        let mut expect_start = 0usize;
        for e in &episodes {
            if e.start != expect_start || e.len == 0 {
                return Err(ReplayError::IndexMismatch(format!(
                    "episode {} claims start {} len {}, expected start {}",
                    e.id, e.start, e.len, expect_start
                )));
            }
            expect_start += e.len;
            if episodes.iter().filter(|o| o.id == e.id).count() > 1 {
                return Err(ReplayError::DuplicateEpisode { id: e.id });
            }
            for (i, rec) in records[e.start..e.start + e.len].iter().enumerate() {
                if rec.episode_id != e.id {
                    return Err(ReplayError::IndexMismatch(format!(
                        "record {} inside episode {} carries id {}",
                        e.start + i,
                        e.id,
                        rec.episode_id
                    )));
                }
                if rec.t != i as u32 {
                    return Err(ReplayError::NonContiguousT { episode: e.id, index: i, t: rec.t });
                }
            }
        }
        if expect_start != records.len() {
            return Err(ReplayError::IndexMismatch(format!(
                "index covers {expect_start} records, file holds {}",
                records.len()
            )));
        }
        Ok(ReplayStore::from_parts(records, episodes))
    }
}
