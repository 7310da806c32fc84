//! Checkpoint files: `GKWM`, u32 version, u32-length-prefixed architecture
//! JSON, u64 vocabulary fingerprint, u32-length-prefixed metadata JSON, u32
//! tensor count, then each parameter tensor in declaration order as u32
//! rank, u32 extents and little-endian `f32` values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::arch::{ArchitectureSpec, Variant};
use super::network::Model;
use crate::autodiff::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub const MAGIC: &[u8; 4] = b"GKWM";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0 is the untrained model.
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub loss_curve: Vec<EpochRecord>,
    /// Free-form label of the training targets, e.g. `oracle` or `vision`.
    #[serde(default)]
    pub targets: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ModelCheckpoint {
    pub spec: ArchitectureSpec,
    pub params: ParamStore<f32>,
    pub vocab_fingerprint: u64,
    pub metadata: TrainingMetadata,
}

impl ModelCheckpoint {
    pub fn new<F: Real>(model: &Model<F>, vocab_fingerprint: u64, metadata: TrainingMetadata) -> Self {
        ModelCheckpoint {
            spec: model.spec().clone(),
            params: model.params().cast(),
            vocab_fingerprint,
            metadata,
        }
    }

    pub fn model<F: Real>(&self) -> Result<Model<F>> {
        Model::from_params(&self.spec, self.params.cast())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let spec = self.spec.to_canonical_json();
        out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
        out.extend_from_slice(spec.as_bytes());
        out.extend_from_slice(&self.vocab_fingerprint.to_le_bytes());
        let meta = serde_json::to_string(&self.metadata).expect("metadata serializes");
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for t in self.params.tensors() {
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                expected: "GKWM",
            });
        }
        r.pos = 4;
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::BadVersion {
                path: path.to_path_buf(),
                found: version,
            });
        }
        let n = r.u32()? as usize;
        let spec: ArchitectureSpec = r.json(n)?;
        let vocab_fingerprint = r.u64()?;
        let n = r.u32()? as usize;
        let metadata: TrainingMetadata = r.json(n)?;
        let count = r.u32()? as usize;
        let names = super::network::param_names(&spec);
        if names.len() != count {
            return Err(r.shape(format!(
                "{count} tensors stored but the {} architecture has {}",
                spec.variant,
                names.len()
            )));
        }
        let mut params = ParamStore::new();
        for name in names {
            let rank = r.u32()? as usize;
            if rank == 0 || rank > 3 {
                return Err(r.shape(format!("tensor {name} has rank {rank}")));
            }
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let raw = r.take(4 * numel)?;
            let data: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            if data.iter().any(|v| !v.is_finite()) {
                return Err(r.shape(format!("tensor {name} holds non-finite values")));
            }
            params.push(name, Tensor::from_vec(&shape, data)?);
        }
        if r.pos != bytes.len() {
            return Err(r.shape(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        // Shape validation against the spec.
        Model::from_params(&spec, params.clone()).map_err(|e| r.shape(e.to_string()))?;
        Ok(ModelCheckpoint {
            spec,
            params,
            vocab_fingerprint,
            metadata,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::TruncatedPayload {
                path: self.path.to_path_buf(),
                expected: self.pos + n,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn json<T: for<'de> Deserialize<'de>>(&mut self, n: usize) -> Result<T> {
        let raw = self.take(n)?;
        serde_json::from_slice(raw).map_err(|source| Error::Json {
            path: self.path.to_path_buf(),
            source,
        })
    }

    fn shape(&self, detail: String) -> Error {
        Error::FileShape {
            path: self.path.to_path_buf(),
            detail,
        }
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &ModelCheckpoint) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, checkpoint.to_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads a checkpoint, refusing it when the vocabulary fingerprint or the
/// variant differs from what the caller expects.
pub fn load_checkpoint(
    path: impl AsRef<Path>,
    expected_fingerprint: Option<u64>,
    expected_variant: Option<Variant>,
) -> Result<ModelCheckpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ckpt = ModelCheckpoint::from_bytes(&bytes, path)?;
    if let Some(expected) = expected_fingerprint {
        if expected != ckpt.vocab_fingerprint {
            return Err(Error::FingerprintMismatch {
                expected,
                found: ckpt.vocab_fingerprint,
            });
        }
    }
    if let Some(v) = expected_variant {
        if v != ckpt.spec.variant {
            return Err(Error::VariantMismatch {
                requested: v.to_string(),
                found: ckpt.spec.variant.to_string(),
            });
        }
    }
    Ok(ckpt)
}
