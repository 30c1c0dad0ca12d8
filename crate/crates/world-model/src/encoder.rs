//! Frozen patch encoder: each group of 8 rays maps through a fixed
//! orthogonal 8-to-32 projection and gains a per-patch positional offset.

use grad_core::seeding::{rng_from, stream_seed};
use grad_core::{ParamMap, Tensor};

use crate::error::{Result, WmError};
use crate::{EMBED_DIM, LATENT_LEN, PATCH_COUNT, PATCH_WIDTH};

pub struct FrozenEncoder {
    params: ParamMap,
    // flat copies of the map contents, so the hot path skips name lookups
    proj: Vec<f64>, // [P][D][PATCH_WIDTH]
    pos: Vec<f64>,  // [P][D]
}

impl FrozenEncoder {
    pub fn new(seed: u64) -> Self {
        let mut rng = rng_from(stream_seed(seed, "encoder"));
        let mut params = ParamMap::new();
        for p in 0..PATCH_COUNT {
            // orthonormal columns make the 8->32 map an isometry, so no ray
            // information is lost
            let t = Tensor::orthogonal_cols(EMBED_DIM, PATCH_WIDTH, &mut rng);
            params.insert(&format!("enc.proj{p}"), t);
        }
        params.insert("enc.pos", Tensor::uniform(vec![PATCH_COUNT, EMBED_DIM], 0.5, &mut rng));
        Self::from_params(params).expect("fresh encoder params are well-formed")
    }

    /// Rebuilds an encoder around existing parameters (checkpoint restore).
    pub fn from_params(params: ParamMap) -> Result<Self> {
        let mut proj = vec![0.0; PATCH_COUNT * EMBED_DIM * PATCH_WIDTH];
        for p in 0..PATCH_COUNT {
            let name = format!("enc.proj{p}");
            let t = params.get(&name).ok_or_else(|| WmError::MissingParam(name.clone()))?;
            // stored [EMBED_DIM, PATCH_WIDTH]: row j holds the weights that
            // produce output coordinate j
            proj[p * EMBED_DIM * PATCH_WIDTH..(p + 1) * EMBED_DIM * PATCH_WIDTH]
                .copy_from_slice(t.data());
        }
        let pos = params
            .get("enc.pos")
            .ok_or_else(|| WmError::MissingParam("enc.pos".into()))?
            .data()
            .to_vec();
        Ok(FrozenEncoder { params, proj, pos })
    }

    /// Embeds one depth scan as 8 patch vectors, row-major [P, D].
    pub fn encode(&self, depth: &[f64]) -> Result<Vec<f64>> {
        if depth.len() != PATCH_COUNT * PATCH_WIDTH {
            return Err(WmError::BadDepthLen {
                expected: PATCH_COUNT * PATCH_WIDTH,
                found: depth.len(),
            });
        }
        let mut z = vec![0.0; LATENT_LEN];
        for p in 0..PATCH_COUNT {
            let d = &depth[p * PATCH_WIDTH..(p + 1) * PATCH_WIDTH];
            let proj = &self.proj[p * EMBED_DIM * PATCH_WIDTH..(p + 1) * EMBED_DIM * PATCH_WIDTH];
            let out = &mut z[p * EMBED_DIM..(p + 1) * EMBED_DIM];
            for j in 0..EMBED_DIM {
                let row = &proj[j * PATCH_WIDTH..(j + 1) * PATCH_WIDTH];
                let mut acc = 0.0;
                for i in 0..PATCH_WIDTH {
                    acc += row[i] * d[i];
                }
                out[j] = acc + self.pos[p * EMBED_DIM + j];
            }
        }
        Ok(z)
    }

    /// Replay records store depth as f32; widen and encode.
    pub fn encode_scan(&self, depth: &[f32; 64]) -> Vec<f64> {
        let wide: Vec<f64> = depth.iter().map(|&v| v as f64).collect();
        self.encode(&wide).expect("fixed-size scan")
    }

    pub fn positional(&self) -> &[f64] {
        &self.pos
    }

    pub fn params(&self) -> &ParamMap {
        &self.params
    }

    pub fn checksum(&self) -> u64 {
        self.params.checksum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_depth_returns_positional_table() {
        let enc = FrozenEncoder::new(9);
        let z = enc.encode(&vec![0.0; 64]).unwrap();
        assert_eq!(z, enc.positional());
    }

    #[test]
    fn encoding_is_linear_in_depth() {
        let enc = FrozenEncoder::new(9);
        let d: Vec<f64> = (0..64).map(|i| (i as f64) / 63.0).collect();
        let scaled: Vec<f64> = d.iter().map(|v| v * 0.37).collect();
        let z = enc.encode(&d).unwrap();
        let zs = enc.encode(&scaled).unwrap();
        let pos = enc.positional();
        for i in 0..LATENT_LEN {
            let lhs = zs[i] - pos[i];
            let rhs = 0.37 * (z[i] - pos[i]);
            assert!((lhs - rhs).abs() < 1e-12, "coord {i}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn same_seed_same_bits() {
        let a = FrozenEncoder::new(1234);
        let b = FrozenEncoder::new(1234);
        assert_eq!(a.checksum(), b.checksum());
        let d: Vec<f64> = (0..64).map(|i| ((i * 7919) % 100) as f64 / 100.0).collect();
        let za = a.encode(&d).unwrap();
        let zb = b.encode(&d).unwrap();
        for (x, y) in za.iter().zip(&zb) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_ne!(a.checksum(), FrozenEncoder::new(1235).checksum());
    }

    #[test]
    fn wrong_length_rejected() {
        let enc = FrozenEncoder::new(9);
        assert!(matches!(
            enc.encode(&vec![0.0; 63]),
            Err(WmError::BadDepthLen { expected: 64, found: 63 })
        ));
    }

    #[test]
    fn projection_columns_are_orthonormal() {
        let enc = FrozenEncoder::new(42);
        // column i of patch p lives at proj[p][j][i] over j
        for p in 0..PATCH_COUNT {
            let base = p * EMBED_DIM * PATCH_WIDTH;
            for a in 0..PATCH_WIDTH {
                for b in 0..PATCH_WIDTH {
                    let mut dot = 0.0;
                    for j in 0..EMBED_DIM {
                        dot += enc.proj[base + j * PATCH_WIDTH + a]
                            * enc.proj[base + j * PATCH_WIDTH + b];
                    }
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-10);
                }
            }
        }
    }
}
