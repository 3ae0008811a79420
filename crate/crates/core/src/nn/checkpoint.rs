//! Self-describing binary checkpoints.
//!
//! Layout: magic, format version, the network config as JSON, its hash, the
//! training-step counter, then one entry per named tensor carrying shape and
//! raw little-endian f32 values. Round-trips are bit-exact.

use super::{NetConfig, NnError, QNetwork, Result};
use crate::autodiff::Tensor;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"DQGATCP1";

pub fn save<W: Write>(net: &QNetwork<f32>, step: u64, mut w: W) -> Result<()> {
    let io = |e: std::io::Error| NnError::Checkpoint(e.to_string());
    w.write_all(MAGIC).map_err(io)?;
    let config_json = serde_json::to_vec(&net.config)
        .map_err(|e| NnError::Checkpoint(format!("config encode: {e}")))?;
    w.write_all(&(config_json.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&config_json).map_err(io)?;
    w.write_all(&net.config.hash().to_le_bytes()).map_err(io)?;
    w.write_all(&step.to_le_bytes()).map_err(io)?;
    let tensors = net.tensors();
    w.write_all(&(tensors.len() as u32).to_le_bytes()).map_err(io)?;
    for (name, tensor) in &tensors {
        let name_bytes = name.as_bytes();
        w.write_all(&(name_bytes.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(name_bytes).map_err(io)?;
        w.write_all(&(tensor.rank() as u32).to_le_bytes()).map_err(io)?;
        for &dim in tensor.shape() {
            w.write_all(&(dim as u64).to_le_bytes()).map_err(io)?;
        }
        for &v in tensor.data() {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    Ok(())
}

pub fn save_to_path(net: &QNetwork<f32>, step: u64, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)
        .map_err(|e| NnError::Checkpoint(format!("create {}: {e}", path.display())))?;
    save(net, step, std::io::BufWriter::new(file))
}

pub fn load<R: Read>(mut r: R) -> Result<(QNetwork<f32>, u64)> {
    let io = |e: std::io::Error| NnError::Checkpoint(e.to_string());
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let config_len = read_u32(&mut r)? as usize;
    let mut config_json = vec![0u8; config_len];
    r.read_exact(&mut config_json).map_err(io)?;
    let config: NetConfig = serde_json::from_slice(&config_json)
        .map_err(|e| NnError::Checkpoint(format!("config decode: {e}")))?;
    let stored_hash = read_u64(&mut r)?;
    if stored_hash != config.hash() {
        return Err(NnError::Checkpoint("config hash mismatch".into()));
    }
    let step = read_u64(&mut r)?;
    let n_entries = read_u32(&mut r)? as usize;

    let mut net: QNetwork<f32> = QNetwork::new(config, 0);
    let mut slots = net.tensors_mut();
    let mut filled = vec![false; slots.len()];
    for _ in 0..n_entries {
        let name_len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(io)?;
        let name = String::from_utf8(name)
            .map_err(|_| NnError::Checkpoint("non-utf8 tensor name".into()))?;
        let rank = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(read_u64(&mut r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        let mut buf = [0u8; 4];
        for _ in 0..numel {
            r.read_exact(&mut buf).map_err(io)?;
            data.push(f32::from_le_bytes(buf));
        }
        let tensor = Tensor::from_vec(&shape, data)
            .map_err(|e| NnError::Checkpoint(format!("entry {name}: {e}")))?;
        let idx = slots
            .iter()
            .position(|(n, _)| *n == name)
            .ok_or_else(|| NnError::Checkpoint(format!("unknown tensor `{name}`")))?;
        if slots[idx].1.shape() != tensor.shape() {
            return Err(NnError::Checkpoint(format!(
                "tensor `{name}`: shape {:?} != expected {:?}",
                tensor.shape(),
                slots[idx].1.shape()
            )));
        }
        *slots[idx].1 = tensor;
        filled[idx] = true;
    }
    if let Some(missing) = filled.iter().position(|&f| !f) {
        return Err(NnError::Checkpoint(format!(
            "missing tensor `{}`",
            slots[missing].0
        )));
    }
    drop(slots);
    Ok((net, step))
}

pub fn load_from_path(path: &Path) -> Result<(QNetwork<f32>, u64)> {
    let file = std::fs::File::open(path)
        .map_err(|e| NnError::Checkpoint(format!("open {}: {e}", path.display())))?;
    load(std::io::BufReader::new(file))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| NnError::Checkpoint(e.to_string()))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)
        .map_err(|e| NnError::Checkpoint(e.to_string()))?;
    Ok(u64::from_le_bytes(buf))
}
