//! Binary checkpoint container.
//!
//! Layout: magic `DDTM`, format version (`u32` LE), tensor count (`u32`),
//! then per tensor its name length, UTF-8 name, rank and dims (all `u32`
//! LE), followed by the raw little-endian `f32` data of every tensor in
//! manifest order. Tensors are written in name order. The configuration
//! travels as a rank-1 tensor of UTF-8 JSON bytes named `__config_json`.
//! Values that must survive in full `f64` precision (marginals, the
//! node-count histogram, the step counter) are stored as `len x 4` tensors
//! holding the four 16-bit chunks of each value's bit pattern, least
//! significant first; every chunk is an integer exactly representable in
//! `f32`.

use super::{AdamState, TrainConfig};
use crate::condition::{pair_context, ConditionContext, ConditionError, ProteinEmbedding};
use crate::denoiser::{DenoiserConfig, DenoiserError, DenoiserParams};
use crate::diffusion::{cosine_schedule, DiffusionError, Marginals, NoiseSchedule};
use crate::molgraph::AtomVocab;
use crate::sampler::NodeCountHistogram;
use crate::tensor::Mat;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DDTM";
pub const CHECKPOINT_VERSION: u32 = 1;

const CONFIG: &str = "__config_json";
const STEP: &str = "__step";
const HISTOGRAM: &str = "histogram";
const MARGINAL_X: &str = "marginals.x";
const MARGINAL_E: &str = "marginals.e";
const PARAM: &str = "param.";
const ADAM_M: &str = "adam.m.";
const ADAM_V: &str = "adam.v.";
const PROTEIN: &str = "protein.";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic bytes)")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("{0} trailing bytes after checkpoint data")]
    Trailing(usize),
    #[error("tensor name is not UTF-8")]
    Name,
    #[error("missing tensor {0}")]
    Missing(String),
    #[error("malformed tensor {0}")]
    Malformed(String),
    #[error("config: {0}")]
    Config(#[from] serde_json::Error),
    #[error(transparent)]
    Denoiser(#[from] DenoiserError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Condition(#[from] ConditionError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

/// Everything needed to resume training or to sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: DenoiserConfig,
    pub train: TrainConfig,
    pub vocab: AtomVocab,
    pub cosine_offset: f64,
    pub params: DenoiserParams,
    pub adam: AdamState,
    pub marginals: Marginals,
    pub histogram: NodeCountHistogram,
    /// Embeddings of every protein seen in training.
    pub proteins: BTreeMap<String, ProteinEmbedding>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    model: DenoiserConfig,
    train: TrainConfig,
    vocab: AtomVocab,
    cosine_offset: f64,
}

struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    fn matrix(m: &Mat) -> Self {
        Tensor {
            dims: vec![m.rows, m.cols],
            data: m.data.iter().map(|&v| v as f32).collect(),
        }
    }

    fn vector(v: &[f64]) -> Self {
        Tensor {
            dims: vec![v.len()],
            data: v.iter().map(|&x| x as f32).collect(),
        }
    }

    fn exact(v: &[f64]) -> Self {
        let mut data = Vec::with_capacity(v.len() * 4);
        for x in v {
            let bits = x.to_bits();
            data.extend((0..4).map(|k| ((bits >> (16 * k)) & 0xffff) as f32));
        }
        Tensor {
            dims: vec![v.len(), 4],
            data,
        }
    }

    fn from_exact(&self, name: &str) -> Result<Vec<f64>, CheckpointError> {
        if self.dims.len() != 2 || self.dims[1] != 4 {
            return Err(CheckpointError::Malformed(name.to_string()));
        }
        self.data
            .chunks_exact(4)
            .map(|c| {
                let mut bits = 0u64;
                for (k, &v) in c.iter().enumerate() {
                    if !(0.0..=65535.0).contains(&v) || v.fract() != 0.0 {
                        return Err(CheckpointError::Malformed(name.to_string()));
                    }
                    bits |= (v as u64) << (16 * k);
                }
                Ok(f64::from_bits(bits))
            })
            .collect()
    }

    fn to_mat(&self, name: &str) -> Result<Mat, CheckpointError> {
        match self.dims[..] {
            [r, c] => Ok(Mat::from_vec(r, c, self.f64s())),
            _ => Err(CheckpointError::Malformed(name.to_string())),
        }
    }

    fn f64s(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

impl Checkpoint {
    pub fn step(&self) -> u64 {
        self.adam.step
    }

    pub fn schedule(&self) -> Result<NoiseSchedule, DiffusionError> {
        cosine_schedule(self.model.steps, self.cosine_offset)
    }

    /// Fused context for a protein pair using the stored embeddings.
    pub fn context(&self, a: &str, b: &str) -> Result<ConditionContext, CheckpointError> {
        let get = |id: &str| {
            self.proteins
                .get(id)
                .ok_or_else(|| CheckpointError::Missing(format!("{PROTEIN}{id}")))
        };
        Ok(pair_context(get(a)?, get(b)?, self.model.strategy)?)
    }

    fn tensors(&self) -> BTreeMap<String, Tensor> {
        let mut t = BTreeMap::new();
        let meta = Meta {
            model: self.model.clone(),
            train: self.train.clone(),
            vocab: self.vocab.clone(),
            cosine_offset: self.cosine_offset,
        };
        let json = serde_json::to_vec(&meta).expect("config serializes");
        t.insert(
            CONFIG.to_string(),
            Tensor {
                dims: vec![json.len()],
                data: json.iter().map(|&b| b as f32).collect(),
            },
        );
        t.insert(STEP.to_string(), Tensor::exact(&[self.adam.step as f64]));
        for (name, m) in &self.params.tensors {
            t.insert(format!("{PARAM}{name}"), Tensor::matrix(m));
        }
        for (name, m) in &self.adam.m {
            t.insert(format!("{ADAM_M}{name}"), Tensor::matrix(m));
        }
        for (name, m) in &self.adam.v {
            t.insert(format!("{ADAM_V}{name}"), Tensor::matrix(m));
        }
        t.insert(MARGINAL_X.to_string(), Tensor::exact(&self.marginals.x));
        t.insert(MARGINAL_E.to_string(), Tensor::exact(&self.marginals.e));
        t.insert(HISTOGRAM.to_string(), Tensor::exact(&self.histogram.dense()));
        for (id, e) in &self.proteins {
            t.insert(format!("{PROTEIN}{id}.cls"), Tensor::vector(&e.cls));
            t.insert(format!("{PROTEIN}{id}.tokens"), Tensor::matrix(&e.tokens));
        }
        t
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = self.tensors();
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, t) in &tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
            for &d in &t.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
        }
        for t in tensors.values() {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(CheckpointError::Magic);
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let count = r.u32()? as usize;
        let mut manifest = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| CheckpointError::Name)?
                .to_string();
            let rank = r.u32()? as usize;
            let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            manifest.push((name, dims));
        }
        let mut tensors = BTreeMap::new();
        for (name, dims) in manifest {
            let n: usize = dims.iter().product();
            let raw = r.take(n.checked_mul(4).ok_or(CheckpointError::Truncated)?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.insert(name, Tensor { dims, data });
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Trailing(bytes.len() - r.pos));
        }
        Self::from_tensors(tensors)
    }

    fn from_tensors(mut t: BTreeMap<String, Tensor>) -> Result<Self, CheckpointError> {
        let mut take = |name: &str| t.remove(name).ok_or_else(|| CheckpointError::Missing(name.to_string()));
        let cfg = take(CONFIG)?;
        let json: Vec<u8> = cfg.data.iter().map(|&v| v as u8).collect();
        let meta: Meta = serde_json::from_slice(&json)?;
        let step = match take(STEP)?.from_exact(STEP)?[..] {
            [s] if s >= 0.0 && s.fract() == 0.0 => s as u64,
            _ => return Err(CheckpointError::Malformed(STEP.into())),
        };
        let mx = take(MARGINAL_X)?.from_exact(MARGINAL_X)?;
        let me = take(MARGINAL_E)?.from_exact(MARGINAL_E)?;
        let histogram = NodeCountHistogram::from_dense(&take(HISTOGRAM)?.from_exact(HISTOGRAM)?)
            .map_err(|_| CheckpointError::Malformed(HISTOGRAM.into()))?;

        let mut params = BTreeMap::new();
        let mut m = BTreeMap::new();
        let mut v = BTreeMap::new();
        let mut cls: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut tokens: BTreeMap<String, Mat> = BTreeMap::new();
        for (name, tensor) in std::mem::take(&mut t) {
            if let Some(p) = name.strip_prefix(PARAM) {
                params.insert(p.to_string(), tensor.to_mat(&name)?);
            } else if let Some(p) = name.strip_prefix(ADAM_M) {
                m.insert(p.to_string(), tensor.to_mat(&name)?);
            } else if let Some(p) = name.strip_prefix(ADAM_V) {
                v.insert(p.to_string(), tensor.to_mat(&name)?);
            } else if let Some(id) = name.strip_prefix(PROTEIN).and_then(|s| s.strip_suffix(".cls")) {
                cls.insert(id.to_string(), tensor.f64s());
            } else if let Some(id) = name.strip_prefix(PROTEIN).and_then(|s| s.strip_suffix(".tokens")) {
                tokens.insert(id.to_string(), tensor.to_mat(&name)?);
            } else {
                return Err(CheckpointError::Malformed(name));
            }
        }
        let params = DenoiserParams::from_tensors(meta.model.clone(), params)?;
        let shapes_match = |g: &BTreeMap<String, Mat>| {
            g.len() == params.tensors.len()
                && params
                    .tensors
                    .iter()
                    .all(|(k, p)| g.get(k).map(Mat::shape) == Some(p.shape()))
        };
        if !shapes_match(&m) || !shapes_match(&v) {
            return Err(CheckpointError::Malformed("optimizer moments".into()));
        }
        let mut proteins = BTreeMap::new();
        for (id, c) in cls {
            let tok = tokens
                .remove(&id)
                .ok_or_else(|| CheckpointError::Missing(format!("{PROTEIN}{id}.tokens")))?;
            proteins.insert(
                id.clone(),
                ProteinEmbedding {
                    id,
                    cls: c,
                    tokens: tok,
                },
            );
        }
        if let Some(id) = tokens.keys().next() {
            return Err(CheckpointError::Missing(format!("{PROTEIN}{id}.cls")));
        }
        let marginals = Marginals::new(mx, me)?;
        Ok(Checkpoint {
            model: meta.model,
            train: meta.train,
            vocab: meta.vocab,
            cosine_offset: meta.cosine_offset,
            params,
            adam: AdamState { step, m, v },
            marginals,
            histogram,
            proteins,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_bytes()).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
