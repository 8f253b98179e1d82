//! Binary tensor container: magic, version, JSON manifest, little-endian
//! f32 payload. Used for model checkpoints and held-out datasets.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use xsrl_autodiff::{AdamState, ParamSet};

use crate::error::{Result, XsrlError};

pub const MAGIC: &[u8; 8] = b"XSRLCKPT";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    /// Byte offset into the payload.
    pub offset: usize,
    /// Byte length.
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub kind: String,
    pub meta: serde_json::Value,
    pub tensors: Vec<TensorEntry>,
    /// Step counters of the stored optimizer states, keyed by model name.
    #[serde(default)]
    pub optimizer: Vec<(String, u64)>,
}

/// In-memory form of a container file.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Array2<f64>)>,
    pub optimizer: Vec<(String, u64)>,
}

impl Container {
    pub fn new(kind: impl Into<String>, meta: serde_json::Value) -> Self {
        Self {
            kind: kind.into(),
            meta,
            tensors: Vec::new(),
            optimizer: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Array2<f64>) {
        self.tensors.push((name.into(), value));
    }

    pub fn push_params(&mut self, params: &ParamSet) {
        for (entry, v) in params.entries() {
            self.push(params.label(entry), v.clone());
        }
    }

    pub fn push_adam(&mut self, params: &ParamSet, state: &AdamState) {
        for (((entry, _), m), v) in params.entries().iter().zip(state.first_moments()).zip(state.second_moments()) {
            self.push(format!("opt/{}/m", params.label(entry)), m.clone());
            self.push(format!("opt/{}/v", params.label(entry)), v.clone());
        }
        self.optimizer.push((params.name().to_string(), state.step_count()));
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn require(&self, name: &str) -> Result<&Array2<f64>> {
        self.get(name)
            .ok_or_else(|| XsrlError::InvalidInput(format!("container has no tensor `{name}`")))
    }

    /// Fills `params` from the stored entries, checking every shape.
    pub fn load_params(&self, params: &mut ParamSet) -> Result<()> {
        let names: Vec<String> = params.entries().iter().map(|(n, _)| n.clone()).collect();
        for entry in names {
            let v = self.require(&params.label(&entry))?.clone();
            params.set(&entry, v)?;
        }
        Ok(())
    }

    /// Restores optimizer moments if present; returns whether they were.
    pub fn load_adam(&self, params: &ParamSet, state: &mut AdamState) -> Result<bool> {
        let Some(&(_, step)) = self.optimizer.iter().find(|(n, _)| n == params.name()) else {
            return Ok(false);
        };
        let mut m = Vec::new();
        let mut v = Vec::new();
        for (entry, value) in params.entries() {
            let label = params.label(entry);
            for (dst, suffix) in [(&mut m, "m"), (&mut v, "v")] {
                let t = self.require(&format!("opt/{label}/{suffix}"))?;
                if t.dim() != value.dim() {
                    return Err(XsrlError::InvalidInput(format!("optimizer moment of `{label}` has the wrong shape")));
                }
                dst.push(t.clone());
            }
        }
        state.restore(m, v, step)?;
        Ok(true)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut payload = Vec::new();
        let mut tensors = Vec::with_capacity(self.tensors.len());
        for (name, v) in &self.tensors {
            let offset = payload.len();
            for x in v.iter() {
                payload.extend_from_slice(&(*x as f32).to_le_bytes());
            }
            tensors.push(TensorEntry {
                name: name.clone(),
                shape: [v.nrows(), v.ncols()],
                offset,
                len: payload.len() - offset,
            });
        }
        let manifest = Manifest {
            version: FORMAT_VERSION,
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            tensors,
            optimizer: self.optimizer.clone(),
        };
        let manifest = serde_json::to_vec(&manifest)?;
        let mut out = Vec::with_capacity(HEADER_LEN + manifest.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: String| XsrlError::checkpoint(path, reason);
        if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint container (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(bad(format!("format version {version}, expected {FORMAT_VERSION}")));
        }
        let mlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = &bytes[HEADER_LEN..];
        if mlen > body.len() {
            return Err(bad(format!("truncated manifest: {mlen} bytes declared, {} present", body.len())));
        }
        let manifest: Manifest =
            serde_json::from_slice(&body[..mlen]).map_err(|e| bad(format!("unreadable manifest: {e}")))?;
        if manifest.version != version {
            return Err(bad(format!("manifest version {} disagrees with header {version}", manifest.version)));
        }
        let payload = &body[mlen..];
        let mut cursor = 0;
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for t in &manifest.tensors {
            if t.offset != cursor {
                return Err(bad(format!(
                    "tensor `{}` at offset {} but previous data ends at {cursor} (overlap or gap)",
                    t.name, t.offset
                )));
            }
            let expected = t.shape[0] * t.shape[1] * 4;
            if t.len != expected {
                return Err(bad(format!("tensor `{}` length {} does not match shape {:?}", t.name, t.len, t.shape)));
            }
            let end = t.offset + t.len;
            if end > payload.len() {
                return Err(bad(format!("truncated payload: tensor `{}` ends at {end}, payload is {}", t.name, payload.len())));
            }
            let data: Vec<f64> = payload[t.offset..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                .collect();
            let v = Array2::from_shape_vec((t.shape[0], t.shape[1]), data).expect("length checked");
            tensors.push((t.name.clone(), v));
            cursor = end;
        }
        if cursor != payload.len() {
            return Err(bad(format!("payload has {} trailing bytes not covered by the manifest", payload.len() - cursor)));
        }
        Ok(Self {
            kind: manifest.kind,
            meta: manifest.meta,
            tensors,
            optimizer: manifest.optimizer,
        })
    }

    /// Writes atomically via a temporary sibling file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| XsrlError::io(dir, e))?;
        }
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| XsrlError::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| XsrlError::io(&tmp, e))?;
        f.sync_all().map_err(|e| XsrlError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| XsrlError::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| XsrlError::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

/// Parses the manifest only.
pub fn read_manifest(bytes: &[u8]) -> Option<Manifest> {
    if bytes.len() < HEADER_LEN || &bytes[..8] != MAGIC {
        return None;
    }
    let mlen = u64::from_le_bytes(bytes[12..20].try_into().ok()?) as usize;
    serde_json::from_slice(bytes.get(HEADER_LEN..HEADER_LEN + mlen)?).ok()
}
