//! Versioned binary checkpoints: model config as JSON plus named flat
//! parameter arrays (little-endian f64) with a SHA-256 integrity checksum.
//!
//! Layout:
//!   magic "PFCHKPT\n" | version u32 | cfg_len u32 | cfg JSON |
//!   n_params u32 | per param: name_len u16, name, dtype u8 (4|8),
//!   ndim u8, dims u32 x ndim, data | sha256 of everything before (32 bytes)

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"PFCHKPT\n";
const VERSION: u32 = 1;

pub fn save_checkpoint(path: &Path, params: &ModelParams, cfg: &ModelConfig) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());

    let cfg_json = serde_json::to_vec(cfg)
        .map_err(|e| Error::Checkpoint(format!("config serialization failed: {e}")))?;
    buf.extend_from_slice(&(cfg_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&cfg_json);

    let refs = params.param_refs();
    buf.extend_from_slice(&(refs.len() as u32).to_le_bytes());
    for (name, t) in &refs {
        let name_bytes = name.as_bytes();
        buf.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        buf.extend_from_slice(name_bytes);
        buf.push(8); // f64
        buf.push(t.shape().len() as u8);
        for d in t.shape() {
            buf.extend_from_slice(&(*d as u32).to_le_bytes());
        }
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    fs::write(path, &buf).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!(
                "truncated while reading {what} at offset {}",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, ModelConfig)> {
    let bytes = fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    if bytes.len() < MAGIC.len() + 4 + 32 {
        return Err(Error::Checkpoint("file too short to be a checkpoint".into()));
    }
    let (body, stored_digest) = bytes.split_at(bytes.len() - 32);
    let digest = Sha256::digest(body);
    if digest.as_slice() != stored_digest {
        return Err(Error::Checkpoint("integrity checksum mismatch".into()));
    }

    let mut r = Reader { bytes: body, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let cfg_len = r.u32("config length")? as usize;
    let cfg: ModelConfig = serde_json::from_slice(r.take(cfg_len, "config")?)
        .map_err(|e| Error::Checkpoint(format!("config block: {e}")))?;
    cfg.validate()?;

    let n_params = r.u32("parameter count")? as usize;
    let mut arrays: HashMap<String, Tensor> = HashMap::with_capacity(n_params);
    for i in 0..n_params {
        let name_len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "name")?)
            .map_err(|_| Error::Checkpoint(format!("parameter {i}: name is not utf-8")))?
            .to_string();
        let dtype = r.u8("dtype")?;
        if dtype != 8 && dtype != 4 {
            return Err(Error::Checkpoint(format!(
                "parameter `{name}`: unknown dtype tag {dtype}"
            )));
        }
        let ndim = r.u8("ndim")? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32("dimension")? as usize);
        }
        let numel: usize = shape.iter().product();
        let data: Vec<f64> = if dtype == 8 {
            r.take(numel * 8, &format!("data of `{name}`"))?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect()
        } else {
            r.take(numel * 4, &format!("data of `{name}`"))?
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect()
        };
        if arrays.insert(name.clone(), Tensor::new(shape, data)?).is_some() {
            return Err(Error::Checkpoint(format!("duplicate parameter `{name}`")));
        }
    }
    if r.pos != body.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes after the last parameter",
            body.len() - r.pos
        )));
    }

    // Materialize the architecture, then substitute every stored array.
    let mut params = ModelParams::init(&cfg, 0)?;
    for (name, slot) in params.param_refs_mut() {
        let Some(stored) = arrays.remove(&name) else {
            return Err(Error::Checkpoint(format!("missing parameter `{name}`")));
        };
        if stored.shape() != slot.shape() {
            return Err(Error::Checkpoint(format!(
                "parameter `{name}`: stored shape {:?} does not match config shape {:?}",
                stored.shape(),
                slot.shape()
            )));
        }
        let requires = slot.requires_grad;
        *slot = stored;
        slot.requires_grad = requires;
    }
    if let Some(extra) = arrays.keys().next() {
        return Err(Error::Checkpoint(format!(
            "unexpected parameter `{extra}` not in the architecture"
        )));
    }
    Ok((params, cfg))
}

/// Summary of a checkpoint without materializing parameters.
#[derive(Debug)]
pub struct CheckpointInfo {
    pub version: u32,
    pub config: ModelConfig,
    pub params: Vec<(String, Vec<usize>)>,
    pub total_scalars: usize,
}

pub fn inspect_checkpoint(path: &Path) -> Result<CheckpointInfo> {
    let (params, config) = load_checkpoint(path)?;
    let refs = params.param_refs();
    Ok(CheckpointInfo {
        version: VERSION,
        params: refs
            .iter()
            .map(|(n, t)| (n.clone(), t.shape().to_vec()))
            .collect(),
        total_scalars: crate::model::count_parameters(&params),
        config,
    })
}
