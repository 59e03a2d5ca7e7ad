//! Checkpoint serialization. Layout, all little-endian:
//!
//! ```text
//! magic "SAMAM001"
//! u32 tensor count
//! per tensor: u32 name length, UTF-8 name, u32 rank, u64 dims...,
//!             f32 values row-major
//! u32 config length, config key=value text
//! ```
//!
//! Values are stored single-precision regardless of the in-memory scalar;
//! save -> load -> save reproduces the file byte for byte. Files are
//! written to a sibling temp path and renamed into place, so readers never
//! observe a partial checkpoint.

use crate::error::{Error, Result};
use crate::net::{ModelConfig, SaMamModel};
use crate::scalar::Scalar;
use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"SAMAM001";

const MAX_NAME: usize = 1024;
const MAX_RANK: usize = 8;
const MAX_NUMEL: usize = 1 << 30;

/// Raw checkpoint contents, independent of any model structure.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointData {
    /// (name, dims, row-major values)
    pub tensors: Vec<(String, Vec<usize>, Vec<f32>)>,
    pub config_text: String,
}

impl CheckpointData {
    pub fn total_values(&self) -> usize {
        self.tensors.iter().map(|(_, _, v)| v.len()).sum()
    }
}

fn ck<T>(r: std::io::Result<T>, what: &str) -> Result<T> {
    r.map_err(|e| {
        let detail = if e.kind() == std::io::ErrorKind::UnexpectedEof {
            format!("truncated checkpoint while reading {what}")
        } else {
            format!("{what}: {e}")
        };
        Error::Checkpoint { detail }
    })
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    ck(r.read_exact(&mut b), what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read, what: &str) -> Result<u64> {
    let mut b = [0u8; 8];
    ck(r.read_exact(&mut b), what)?;
    Ok(u64::from_le_bytes(b))
}

/// Writes a checkpoint atomically (temp file + rename).
pub fn write_file(path: &Path, data: &CheckpointData) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp-{}",
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "checkpoint".into()),
        std::process::id()
    ));
    {
        let file = ck(File::create(&tmp), "create temp checkpoint")?;
        let mut w = BufWriter::new(file);
        let res = write_stream(&mut w, data).and_then(|()| ck(w.flush(), "flush checkpoint"));
        if res.is_err() {
            let _ = std::fs::remove_file(&tmp);
            return res;
        }
    }
    ck(std::fs::rename(&tmp, path), "rename checkpoint into place")
}

fn write_stream(w: &mut impl Write, data: &CheckpointData) -> Result<()> {
    ck(w.write_all(MAGIC), "write magic")?;
    let count = u32::try_from(data.tensors.len()).map_err(|_| Error::Checkpoint {
        detail: "too many tensors".into(),
    })?;
    ck(w.write_all(&count.to_le_bytes()), "write tensor count")?;
    for (name, dims, values) in &data.tensors {
        let numel: usize = dims.iter().product();
        if numel != values.len() {
            return Err(Error::Checkpoint {
                detail: format!("tensor '{name}' dims/value mismatch"),
            });
        }
        let nb = name.as_bytes();
        ck(
            w.write_all(&(nb.len() as u32).to_le_bytes()),
            "write name length",
        )?;
        ck(w.write_all(nb), "write name")?;
        ck(
            w.write_all(&(dims.len() as u32).to_le_bytes()),
            "write rank",
        )?;
        for &d in dims {
            ck(w.write_all(&(d as u64).to_le_bytes()), "write dim")?;
        }
        for &v in values {
            ck(w.write_all(&v.to_le_bytes()), "write values")?;
        }
    }
    let cfg = data.config_text.as_bytes();
    ck(
        w.write_all(&(cfg.len() as u32).to_le_bytes()),
        "write config length",
    )?;
    ck(w.write_all(cfg), "write config")
}

/// Reads and structurally validates a checkpoint; rejects bad magic,
/// truncation, and trailing bytes.
pub fn read_file(path: &Path) -> Result<CheckpointData> {
    let file = ck(File::open(path), "open checkpoint")?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 8];
    ck(r.read_exact(&mut magic), "magic")?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint {
            detail: format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&magic),
                String::from_utf8_lossy(MAGIC)
            ),
        });
    }
    let count = read_u32(&mut r, "tensor count")? as usize;
    let mut tensors = Vec::with_capacity(count.min(4096));
    for i in 0..count {
        let name_len = read_u32(&mut r, "name length")? as usize;
        if name_len == 0 || name_len > MAX_NAME {
            return Err(Error::Checkpoint {
                detail: format!("tensor {i}: implausible name length {name_len}"),
            });
        }
        let mut nb = vec![0u8; name_len];
        ck(r.read_exact(&mut nb), "name")?;
        let name = String::from_utf8(nb).map_err(|_| Error::Checkpoint {
            detail: format!("tensor {i}: name is not UTF-8"),
        })?;
        let rank = read_u32(&mut r, "rank")? as usize;
        if rank > MAX_RANK {
            return Err(Error::Checkpoint {
                detail: format!("tensor '{name}': implausible rank {rank}"),
            });
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(read_u64(&mut r, "dims")? as usize);
        }
        let numel: usize = dims.iter().product();
        if numel > MAX_NUMEL {
            return Err(Error::Checkpoint {
                detail: format!("tensor '{name}': implausible element count {numel}"),
            });
        }
        let mut bytes = vec![0u8; numel * 4];
        ck(r.read_exact(&mut bytes), "values")?;
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        tensors.push((name, dims, values));
    }
    let cfg_len = read_u32(&mut r, "config length")? as usize;
    let mut cfg = vec![0u8; cfg_len];
    ck(r.read_exact(&mut cfg), "config")?;
    let config_text = String::from_utf8(cfg).map_err(|_| Error::Checkpoint {
        detail: "config block is not UTF-8".into(),
    })?;
    let mut probe = [0u8; 1];
    match r.read(&mut probe) {
        Ok(0) => {}
        Ok(_) => {
            return Err(Error::Checkpoint {
                detail: "trailing bytes after config block".into(),
            })
        }
        Err(e) => return Err(ck::<()>(Err(e), "end of file").unwrap_err()),
    }
    Ok(CheckpointData {
        tensors,
        config_text,
    })
}

/// Serializes a model: every named parameter in traversal order, then the
/// config text.
pub fn save_model<S: Scalar>(path: &Path, model: &SaMamModel<S>) -> Result<()> {
    let tensors = model
        .named_params()
        .into_iter()
        .map(|(name, t)| {
            let dims = t.shape().to_vec();
            let values = t.data().iter().map(|v| v.to_f64_lossy() as f32).collect();
            (name, dims, values)
        })
        .collect();
    write_file(
        path,
        &CheckpointData {
            tensors,
            config_text: model.config.to_kv_text(),
        },
    )
}

/// Rebuilds a model from a checkpoint: the config block defines the
/// architecture, then every stored tensor must match a named parameter
/// exactly (same set, same shapes).
pub fn load_model<S: Scalar>(path: &Path) -> Result<SaMamModel<S>> {
    let data = read_file(path)?;
    let config = ModelConfig::from_kv_text(&data.config_text)?;
    let model = SaMamModel::new(config)?;
    let params: HashMap<String, _> = model.named_params().into_iter().collect();
    if data.tensors.len() != params.len() {
        return Err(Error::Checkpoint {
            detail: format!(
                "tensor count {} does not match the {} parameters of the configured model",
                data.tensors.len(),
                params.len()
            ),
        });
    }
    let mut seen = HashSet::new();
    for (name, dims, values) in &data.tensors {
        let tensor = params.get(name).ok_or_else(|| Error::Checkpoint {
            detail: format!("unknown tensor '{name}' for the configured model"),
        })?;
        if !seen.insert(name.clone()) {
            return Err(Error::Checkpoint {
                detail: format!("duplicate tensor '{name}'"),
            });
        }
        if tensor.shape() != dims.as_slice() {
            return Err(Error::Checkpoint {
                detail: format!(
                    "tensor '{name}' has shape {:?}, model expects {:?}",
                    dims,
                    tensor.shape()
                ),
            });
        }
        tensor.with_data_mut(|dst| {
            for (d, v) in dst.iter_mut().zip(values) {
                *d = S::lit(*v as f64);
            }
        });
    }
    Ok(model)
}
