use thiserror::Error;

pub type Result<T> = std::result::Result<T, ReplayError>;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("episode has no records")]
    EmptyEpisode,
    #[error("records mix episode ids {expected} and {found}")]
    MixedEpisodeIds { expected: u64, found: u64 },
    #[error("episode {episode}: record {index} has t={t}, expected contiguous from 0")]
    NonContiguousT { episode: u64, index: usize, t: u32 },
    #[error("episode id {id} already stored")]
    DuplicateEpisode { id: u64 },
    #[error("action id {value} is outside the 4-action space")]
    BadAction { value: u8 },
    #[error("validity bitmask {value:#04x} sets bits beyond the tracked humans")]
    BadValidity { value: u8 },
    #[error("no stored episode admits a window of {window} records in this split")]
    NoWindows { window: usize },
    #[error("bad magic {0:?}, not a replay buffer file")]
    BadMagic([u8; 4]),
    #[error("unsupported format version {found}")]
    Version { found: u32 },
    #[error("file truncated: needed {needed} more bytes")]
    Truncated { needed: usize },
    #[error("{extra} bytes of trailing garbage after the index block")]
    TrailingBytes { extra: usize },
    #[error("index block inconsistent with records: {0}")]
    IndexMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
