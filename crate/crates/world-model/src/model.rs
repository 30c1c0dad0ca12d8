//! Bundle of encoder, transition model, and decoder heads with checkpoint
//! save/restore. One file holds all three parameter groups; prefixes route
//! them back on load.

use std::path::Path;

use grad_core::{checkpoint, ParamMap};

use crate::encoder::FrozenEncoder;
use crate::error::Result;
use crate::heads::DecoderHeads;
use crate::transition::TransitionModel;

pub struct WorldModel {
    pub encoder: FrozenEncoder,
    pub transition: TransitionModel,
    pub heads: DecoderHeads,
}

impl WorldModel {
    pub fn new(seed: u64) -> Self {
        WorldModel {
            encoder: FrozenEncoder::new(seed),
            transition: TransitionModel::new(seed),
            heads: DecoderHeads::new(seed),
        }
    }

    fn merged(&self) -> ParamMap {
        let mut m = ParamMap::new();
        for (n, t) in self.encoder.params().iter() {
            m.insert(n, t.clone());
        }
        for (n, t) in self.transition.params().iter() {
            m.insert(n, t.clone());
        }
        for (n, t) in self.heads.params().iter() {
            m.insert(n, t.clone());
        }
        m
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(&self.merged(), path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<WorldModel> {
        let mut merged = WorldModel::new(0).merged();
        checkpoint::load_into(&mut merged, path)?;
        let mut enc = ParamMap::new();
        let mut tm = ParamMap::new();
        let mut dec = ParamMap::new();
        for (n, t) in merged.iter() {
            if n.starts_with("enc.") {
                enc.insert(n, t.clone());
            } else if n.starts_with("tm.") {
                tm.insert(n, t.clone());
            } else {
                dec.insert(n, t.clone());
            }
        }
        Ok(WorldModel {
            encoder: FrozenEncoder::from_params(enc)?,
            transition: TransitionModel::from_params(tm)?,
            heads: DecoderHeads::from_params(dec)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checkpoint_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wm.ntck");
        let model = WorldModel::new(77);
        model.save(&path).unwrap();
        let back = WorldModel::load(&path).unwrap();
        assert_eq!(model.encoder.checksum(), back.encoder.checksum());
        assert_eq!(model.transition.checksum(), back.transition.checksum());
        assert_eq!(model.heads.checksum(), back.heads.checksum());

        // restored model predicts identically, bit for bit
        let z: Vec<Vec<f64>> = (0..3)
            .map(|f| (0..crate::LATENT_LEN).map(|i| ((f * 31 + i) % 17) as f64 * 0.05).collect())
            .collect();
        let a = model.transition.predict_next(&z, &[0, 1, 2]).unwrap();
        let b = back.transition.predict_next(&z, &[0, 1, 2]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
