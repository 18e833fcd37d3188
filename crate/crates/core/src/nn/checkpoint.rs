//! Binary model checkpoints.
//!
//! Layout (all integers little-endian `u32`):
//!
//! ```text
//! b"GCKP" | version | metadata_len | metadata (UTF-8 JSON)
//! | n_params | { name_len | name | ndim | dims... } * n_params
//! | f32 payload, parameters in declaration order
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{Module, Real};

const MAGIC: &[u8; 4] = b"GCKP";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("checkpoint header is not valid UTF-8")]
    Utf8,
    #[error("layer mismatch: {0}")]
    Layout(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub metadata: String,
    pub params: Vec<ParamEntry>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let out = self.buf.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| CheckpointError::Utf8)
    }
}

impl Checkpoint {
    pub fn from_module<F: Real, M: Module<F> + ?Sized>(model: &M, metadata: impl Into<String>) -> Self {
        let mut params = Vec::new();
        model.visit(&mut |p| {
            params.push(ParamEntry {
                name: p.name.clone(),
                shape: p.shape.clone(),
                values: p.value.iter().map(|v| v.as_f64() as f32).collect(),
            })
        });
        Self {
            metadata: metadata.into(),
            params,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let put = |out: &mut Vec<u8>, v: u32| out.extend_from_slice(&v.to_le_bytes());
        out.extend_from_slice(MAGIC);
        put(&mut out, CHECKPOINT_VERSION);
        put(&mut out, self.metadata.len() as u32);
        out.extend_from_slice(self.metadata.as_bytes());
        put(&mut out, self.params.len() as u32);
        for p in &self.params {
            put(&mut out, p.name.len() as u32);
            out.extend_from_slice(p.name.as_bytes());
            put(&mut out, p.shape.len() as u32);
            for &d in &p.shape {
                put(&mut out, d as u32);
            }
        }
        for p in &self.params {
            for v in &p.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let metadata = r.string()?;
        let n = r.u32()? as usize;
        let mut layout = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            layout.push((name, shape));
        }
        let mut params = Vec::with_capacity(layout.len());
        for (name, shape) in layout {
            let count: usize = shape.iter().product();
            let bytes = r.take(count.checked_mul(4).ok_or(CheckpointError::Truncated)?)?;
            let values = bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect();
            params.push(ParamEntry { name, shape, values });
        }
        if r.pos != buf.len() {
            return Err(CheckpointError::Layout(format!("{} trailing bytes", buf.len() - r.pos)));
        }
        Ok(Self { metadata, params })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|source| CheckpointError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        }
        fs::write(path, self.to_bytes()).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let buf = fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_bytes(&buf)
    }

    /// Hex SHA-256 of the serialised checkpoint.
    pub fn digest(&self) -> String {
        Sha256::digest(self.to_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Copies values into a module with exactly the same names and shapes.
    pub fn load_into<F: Real, M: Module<F> + ?Sized>(&self, model: &mut M) -> Result<(), CheckpointError> {
        let specs = model.param_specs();
        if specs.len() != self.params.len() {
            return Err(CheckpointError::Layout(format!(
                "model has {} parameter tensors, checkpoint {}",
                specs.len(),
                self.params.len()
            )));
        }
        for ((name, shape), p) in specs.iter().zip(&self.params) {
            if *name != p.name || *shape != p.shape {
                return Err(CheckpointError::Layout(format!(
                    "expected {name} {shape:?}, found {} {:?}",
                    p.name, p.shape
                )));
            }
        }
        let mut i = 0;
        model.visit_mut(&mut |p| {
            for (d, s) in p.value.iter_mut().zip(&self.params[i].values) {
                *d = F::lit(*s as f64);
            }
            i += 1;
        });
        Ok(())
    }
}
