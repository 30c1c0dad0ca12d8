//! Experience storage for world-model training: fixed-width transition
//! records grouped into episodes, a stable train/held-out split keyed on the
//! episode id, and window sampling that never straddles episode ends.

pub mod error;
pub mod format;
pub mod record;
pub mod store;

pub use error::{ReplayError, Result};
pub use record::{TransitionRecord, DEPTH_RAYS, FUTURE_STEPS, RECORD_BYTES, TRACKED_HUMANS};
pub use store::{split_of, ReplayStore, Split, StoreStats};
