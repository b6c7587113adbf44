//! Versioned checkpoint container.
//!
//! Layout: 8 magic bytes, `u32` format version, then two length-prefixed
//! (`u64`) JSON sections (run metadata, tensor index), then the tensor
//! payload as little-endian `f32`. Every integer is little-endian. Index
//! offsets are relative to the start of the payload.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::denoiser::{Denoiser, DenoiserConfig};
use crate::diffusion::{TrainConfig, Trainer};
use crate::error::{Error, Result};
use crate::nn::{AdamW, ParamEntry, ParamSet};

pub const MAGIC: &[u8; 8] = b"VGCDMCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub model: DenoiserConfig,
    pub train: TrainConfig,
    pub global_step: u64,
    pub epochs_done: usize,
    /// Optimizer step count, present when moment estimates are stored.
    pub optimizer_step: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorRole {
    Param,
    FirstMoment,
    SecondMoment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorIndex {
    pub name: String,
    pub role: TensorRole,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: DenoiserConfig,
    pub train: TrainConfig,
    pub global_step: u64,
    pub epochs_done: usize,
    pub params: ParamSet<f32>,
    pub optimizer: Option<OptimizerState>,
}

impl Checkpoint {
    pub fn from_trainer(tr: &Trainer) -> Self {
        Self {
            model: tr.model.config().clone(),
            train: tr.config.clone(),
            global_step: tr.global_step,
            epochs_done: tr.epochs_done,
            params: tr.model.params.clone(),
            optimizer: Some(OptimizerState {
                step: tr.optimizer.step,
                m: tr.optimizer.m.clone(),
                v: tr.optimizer.v.clone(),
            }),
        }
    }

    pub fn denoiser(&self) -> Result<Denoiser<f32>> {
        Denoiser::with_params(self.model.clone(), self.params.clone())
    }

    /// Restores a trainer that continues from this checkpoint. `train`
    /// replaces the stored training config (for example to raise `epochs`).
    pub fn into_trainer(self, train: Option<TrainConfig>) -> Result<Trainer> {
        let cfg = train.unwrap_or_else(|| self.train.clone());
        let model = Denoiser::with_params(self.model, self.params)?;
        let mut opt = AdamW::new(&model.params, cfg.learning_rate, cfg.weight_decay);
        if let Some(s) = self.optimizer {
            opt.step = s.step;
            opt.m = s.m;
            opt.v = s.v;
        }
        Trainer::resume(model, opt, cfg, self.global_step, self.epochs_done)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = CheckpointMeta {
            model: self.model.clone(),
            train: self.train.clone(),
            global_step: self.global_step,
            epochs_done: self.epochs_done,
            optimizer_step: self.optimizer.as_ref().map(|o| o.step),
        };
        let mut index = Vec::new();
        let mut payload: Vec<u8> = Vec::new();
        let mut push = |name: &str, role, shape: &[usize], data: &[f32]| {
            index.push(TensorIndex {
                name: name.to_string(),
                role,
                shape: shape.to_vec(),
                offset: payload.len() as u64,
            });
            for v in data {
                payload.extend_from_slice(&v.to_le_bytes());
            }
        };
        for e in self.params.entries() {
            push(&e.name, TensorRole::Param, &e.shape, &e.data);
        }
        if let Some(o) = &self.optimizer {
            if o.m.len() != self.params.len() || o.v.len() != self.params.len() {
                return Err(Error::Checkpoint("optimizer state does not match parameters".into()));
            }
            for (e, m) in self.params.entries().iter().zip(&o.m) {
                push(&e.name, TensorRole::FirstMoment, &e.shape, m);
            }
            for (e, v) in self.params.entries().iter().zip(&o.v) {
                push(&e.name, TensorRole::SecondMoment, &e.shape, v);
            }
        }
        let meta = serde_json::to_vec(&meta)?;
        let index = serde_json::to_vec(&index)?;
        let mut out = Vec::with_capacity(28 + meta.len() + index.len() + payload.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(index.len() as u64).to_le_bytes());
        out.extend_from_slice(&index);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::Checkpoint(m);
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes
                .get(pos..pos + n)
                .ok_or_else(|| bad(format!("truncated at byte {pos}")))?;
            pos += n;
            Ok(s)
        };
        if take(8)? != MAGIC {
            return Err(bad("not a checkpoint (bad magic)".into()));
        }
        let version = u32::from_le_bytes(take(4)?.try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported format version {version}")));
        }
        let meta_len = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        let meta: CheckpointMeta = serde_json::from_slice(take(meta_len)?)?;
        let index_len = u64::from_le_bytes(take(8)?.try_into().expect("8 bytes")) as usize;
        let index: Vec<TensorIndex> = serde_json::from_slice(take(index_len)?)?;
        let payload = &bytes[pos..];

        let mut expected_end = 0u64;
        let mut tensor = |t: &TensorIndex| -> Result<Vec<f32>> {
            let n: usize = t.shape.iter().product();
            let start = t.offset as usize;
            let end = start + 4 * n;
            if t.offset != expected_end || end > payload.len() {
                return Err(bad(format!(
                    "tensor {} ({:?}) extent {}..{} does not fit the payload",
                    t.name, t.role, start, end
                )));
            }
            expected_end = end as u64;
            Ok(payload[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect())
        };
        let mut params = Vec::new();
        let mut m = Vec::new();
        let mut v = Vec::new();
        for t in &index {
            let data = tensor(t)?;
            match t.role {
                TensorRole::Param => params.push(ParamEntry {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data,
                }),
                TensorRole::FirstMoment => m.push(data),
                TensorRole::SecondMoment => v.push(data),
            }
        }
        if expected_end as usize != payload.len() {
            return Err(bad(format!(
                "payload has {} trailing bytes",
                payload.len() - expected_end as usize
            )));
        }
        let optimizer = match meta.optimizer_step {
            Some(step) => {
                if m.len() != params.len() || v.len() != params.len() {
                    return Err(bad("optimizer moments do not match parameters".into()));
                }
                Some(OptimizerState { step, m, v })
            }
            None => None,
        };
        Ok(Self {
            model: meta.model,
            train: meta.train,
            global_step: meta.global_step,
            epochs_done: meta.epochs_done,
            params: ParamSet::from_entries(params),
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Checkpoint(format!("{} does not exist", path.display())));
        }
        Self::from_bytes(&fs::read(path)?)
    }

    /// Names of model fields that differ from `expected`.
    pub fn mismatched_fields(&self, expected: &DenoiserConfig) -> Vec<String> {
        let a = serde_json::to_value(&self.model).expect("config serializes");
        let b = serde_json::to_value(expected).expect("config serializes");
        let (Some(a), Some(b)) = (a.as_object(), b.as_object()) else {
            return Vec::new();
        };
        a.iter()
            .filter(|(k, v)| b.get(*k) != Some(*v))
            .map(|(k, _)| format!("model.{k}"))
            .collect()
    }
}
