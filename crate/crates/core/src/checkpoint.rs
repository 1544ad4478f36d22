//! Versioned binary weight container shared by the backbone and the sub-head
//! classifier.
//!
//! Layout (all integers little-endian u32, floats little-endian f32):
//!
//! ```text
//! magic    "rvbb v1\n"
//! meta_len  u32, then meta_len bytes of UTF-8 "key=value\n" lines
//! n_tensors u32
//! tensor    name_len u32, name bytes, ndim u32, dims u32 x ndim, f32 data
//! ```
//!
//! Metadata keys are written in sorted order so identical checkpoints are
//! byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;
use thiserror::Error;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"rvbb v1\n";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("bad magic: expected 'rvbb v1'")]
    BadMagic,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

/// A named tensor in the container. Data is converted through f32 on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: BTreeMap<String, String>,
    pub tensors: Vec<CheckpointTensor>,
}

impl Checkpoint {
    pub fn meta_value(&self, key: &str) -> Result<&str, CheckpointError> {
        self.meta
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| CheckpointError::Malformed(format!("missing meta key {key:?}")))
    }

    pub fn tensor(&self, name: &str) -> Result<&CheckpointTensor, CheckpointError> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| CheckpointError::Malformed(format!("missing tensor {name:?}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        let mut meta = String::new();
        for (k, v) in &self.meta {
            meta.push_str(k);
            meta.push('=');
            meta.push_str(v);
            meta.push('\n');
        }
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
            for &d in &t.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &t.data {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut cursor = io::Cursor::new(bytes);
        let mut magic = [0u8; 8];
        cursor
            .read_exact(&mut magic)
            .map_err(|_| CheckpointError::BadMagic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let read_u32 = |c: &mut io::Cursor<&[u8]>| -> Result<u32, CheckpointError> {
            let mut b = [0u8; 4];
            c.read_exact(&mut b)
                .map_err(|_| CheckpointError::Malformed("truncated".into()))?;
            Ok(u32::from_le_bytes(b))
        };
        let meta_len = read_u32(&mut cursor)? as usize;
        let mut meta_bytes = vec![0u8; meta_len];
        cursor
            .read_exact(&mut meta_bytes)
            .map_err(|_| CheckpointError::Malformed("truncated meta".into()))?;
        let meta_str = String::from_utf8(meta_bytes)
            .map_err(|_| CheckpointError::Malformed("meta is not UTF-8".into()))?;
        let mut meta = BTreeMap::new();
        for line in meta_str.lines() {
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CheckpointError::Malformed(format!("bad meta line {line:?}")))?;
            meta.insert(k.to_string(), v.to_string());
        }
        let n_tensors = read_u32(&mut cursor)? as usize;
        let mut tensors = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let name_len = read_u32(&mut cursor)? as usize;
            let mut name_bytes = vec![0u8; name_len];
            cursor
                .read_exact(&mut name_bytes)
                .map_err(|_| CheckpointError::Malformed("truncated name".into()))?;
            let name = String::from_utf8(name_bytes)
                .map_err(|_| CheckpointError::Malformed("name is not UTF-8".into()))?;
            let ndim = read_u32(&mut cursor)? as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(read_u32(&mut cursor)? as usize);
            }
            let numel: usize = dims.iter().product();
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                let mut b = [0u8; 4];
                cursor
                    .read_exact(&mut b)
                    .map_err(|_| CheckpointError::Malformed("truncated data".into()))?;
                data.push(f32::from_le_bytes(b) as f64);
            }
            tensors.push(CheckpointTensor { name, dims, data });
        }
        Ok(Self { meta, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let path = path.as_ref();
        let mut file = fs::File::create(path).map_err(|e| CheckpointError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        file.write_all(&self.to_bytes())
            .map_err(|e| CheckpointError::Io {
                path: path.display().to_string(),
                source: e,
            })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| CheckpointError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_bytes(&bytes)
    }
}
