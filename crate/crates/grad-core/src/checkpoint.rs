//! Binary checkpoint format for parameter maps.
//!
//! Layout, all little-endian:
//!   magic "NTCK" | version u32 | count u32
//!   then per tensor: name_len u16, name bytes (UTF-8), rank u8,
//!   dims rank*u32, data numel*f64
//!
//! Values round-trip bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{GradError, Result};
use crate::params::ParamMap;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"NTCK";
const VERSION: u32 = 1;

pub fn save(params: &ParamMap, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, t) in params.iter() {
        let name_bytes = name.as_bytes();
        if name_bytes.len() > u16::MAX as usize {
            return Err(GradError::Checkpoint(format!("parameter name too long: {name}")));
        }
        w.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
        w.write_all(name_bytes)?;
        let shape = t.shape();
        if shape.len() > u8::MAX as usize {
            return Err(GradError::Checkpoint(format!("rank too large for {name}")));
        }
        w.write_all(&[shape.len() as u8])?;
        for &d in shape {
            if d > u32::MAX as usize {
                return Err(GradError::Checkpoint(format!("dim too large for {name}")));
            }
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact_or(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|_| GradError::Checkpoint(format!("truncated reading {what}")))
}

/// Loads a checkpoint into a fresh map. All tensors come back with
/// `requires_grad` off; callers re-flag their trainable set.
pub fn load(path: &Path) -> Result<ParamMap> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact_or(&mut r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(GradError::Checkpoint(format!("bad magic {magic:?}")));
    }
    let mut u32buf = [0u8; 4];
    read_exact_or(&mut r, &mut u32buf, "version")?;
    let version = u32::from_le_bytes(u32buf);
    if version != VERSION {
        return Err(GradError::Checkpoint(format!("unsupported version {version}")));
    }
    read_exact_or(&mut r, &mut u32buf, "count")?;
    let count = u32::from_le_bytes(u32buf);
    let mut params = ParamMap::new();
    for i in 0..count {
        let mut u16buf = [0u8; 2];
        read_exact_or(&mut r, &mut u16buf, "name length")?;
        let name_len = u16::from_le_bytes(u16buf) as usize;
        let mut name_bytes = vec![0u8; name_len];
        read_exact_or(&mut r, &mut name_bytes, "name")?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| GradError::Checkpoint(format!("non-UTF8 name in entry {i}")))?;
        let mut rank_buf = [0u8; 1];
        read_exact_or(&mut r, &mut rank_buf, "rank")?;
        let mut shape = Vec::with_capacity(rank_buf[0] as usize);
        let mut numel: usize = 1;
        for _ in 0..rank_buf[0] {
            read_exact_or(&mut r, &mut u32buf, "dim")?;
            let d = u32::from_le_bytes(u32buf) as usize;
            numel = numel
                .checked_mul(d)
                .ok_or_else(|| GradError::Checkpoint(format!("shape overflow in {name}")))?;
            shape.push(d);
        }
        let mut data = vec![0.0f64; numel];
        let mut f64buf = [0u8; 8];
        for v in data.iter_mut() {
            read_exact_or(&mut r, &mut f64buf, "tensor data")?;
            *v = f64::from_le_bytes(f64buf);
        }
        if params.get(&name).is_some() {
            return Err(GradError::Checkpoint(format!("duplicate name {name}")));
        }
        let t = Tensor::from_vec(shape.clone(), data)
            .map_err(|_| GradError::Checkpoint(format!("bad shape {shape:?} for {name}")))?;
        params.insert(&name, t);
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(GradError::Checkpoint("trailing bytes after last tensor".into()));
    }
    Ok(params)
}

/// Copies checkpoint values into an existing map. The checkpoint must carry
/// exactly the same names and shapes; requires-grad flags are preserved.
pub fn load_into(params: &mut ParamMap, path: &Path) -> Result<()> {
    let loaded = load(path)?;
    if loaded.len() != params.len() {
        return Err(GradError::Checkpoint(format!(
            "expected {} tensors, checkpoint has {}",
            params.len(),
            loaded.len()
        )));
    }
    for (name, t) in params.iter_mut() {
        let src = loaded
            .get(name)
            .ok_or_else(|| GradError::Checkpoint(format!("checkpoint missing {name}")))?;
        if src.shape() != t.shape() {
            return Err(GradError::Checkpoint(format!(
                "shape mismatch for {name}: {:?} vs {:?}",
                t.shape(),
                src.shape()
            )));
        }
        t.data_mut().copy_from_slice(src.data());
    }
    Ok(())
}
