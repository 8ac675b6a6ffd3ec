//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"INTERACT"  u32 version  u64 header_len  header (JSON, header_len bytes)
//! f64 * n     parameters, Adam first moments, Adam second moments,
//!             codebook centroids, scaler means and deviations
//! ```
//!
//! The JSON header holds the configuration and its hash, the class list,
//! every tensor shape, the optimizer counters and the generator state.
//! Floats are stored as raw bits, so a round trip is exact.

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use super::assemble::FeatureScaler;
use super::config::PipelineConfig;
use crate::cooccurrence::Codebook;
use crate::error::{Error, Result};
use crate::sequence_model::{AdamConfig, AdamState, ModelDims, ModelParams};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"INTERACT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained model with everything needed to resume or evaluate it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: PipelineConfig,
    pub classes: Vec<String>,
    pub codebook: Codebook,
    pub scaler: FeatureScaler,
    pub params: ModelParams,
    pub adam: AdamState,
    pub rng: ChaCha8Rng,
    pub epoch_losses: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorShape {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdamHeader {
    step: u64,
    config: AdamConfig,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RngHeader {
    seed: String,
    stream: u64,
    word_pos: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: PipelineConfig,
    config_hash: String,
    classes: Vec<String>,
    dims: ModelDims,
    tensors: Vec<TensorShape>,
    adam: AdamHeader,
    rng: RngHeader,
    codebook_k: usize,
    codebook_dim: usize,
    codebook_seed: u64,
    epoch_losses: Vec<f64>,
}

fn bad(message: impl Into<String>) -> Error {
    Error::format("checkpoint", message)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex32(s: &str) -> Option<[u8; 32]> {
    if s.len() != 64 || !s.is_ascii() {
        return None;
    }
    let mut out = [0u8; 32];
    for (i, b) in out.iter_mut().enumerate() {
        *b = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).ok()?;
    }
    Some(out)
}

/// Parameter count implied by `dims`, without allocating.
fn param_count(dims: &ModelDims) -> Option<usize> {
    let cell = |i: usize, h: usize| -> Option<usize> {
        let rows = h.checked_mul(4)?;
        rows.checked_mul(i.checked_add(h)?)?.checked_add(rows)
    };
    let fusion_in = dims.persons.checked_mul(dims.sub_hidden)?.checked_add(dims.descriptor_dim)?;
    let subs = cell(dims.input_dim, dims.sub_hidden)?.checked_mul(dims.sub_cells())?;
    let out = dims.classes.checked_mul(dims.fusion_hidden.checked_add(1)?)?;
    subs.checked_add(cell(fusion_in, dims.fusion_hidden)?)?.checked_add(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.bytes.len() < n {
            return Err(bad("truncated"));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| bad("section too large"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect())
    }

    fn fill(&mut self, dst: &mut [f64]) -> Result<()> {
        let v = self.f64s(dst.len())?;
        if v.iter().any(|x| !x.is_finite()) {
            return Err(bad("non-finite value"));
        }
        dst.copy_from_slice(&v);
        Ok(())
    }
}

impl Checkpoint {
    pub fn dims(&self) -> ModelDims {
        self.params.dims
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            config: self.config.clone(),
            config_hash: self.config.config_hash(),
            classes: self.classes.clone(),
            dims: self.params.dims,
            tensors: self
                .params
                .tensor_specs()
                .into_iter()
                .map(|s| TensorShape {
                    name: s.name,
                    rows: s.rows,
                    cols: s.cols,
                })
                .collect(),
            adam: AdamHeader {
                step: self.adam.step,
                config: self.adam.config,
            },
            rng: RngHeader {
                seed: hex(&self.rng.get_seed()),
                stream: self.rng.get_stream(),
                word_pos: self.rng.get_word_pos().to_string(),
            },
            codebook_k: self.codebook.k(),
            codebook_dim: self.codebook.dim(),
            codebook_seed: self.codebook.seed,
            epoch_losses: self.epoch_losses.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let mut put = |v: &[f64]| {
            for x in v {
                out.extend_from_slice(&x.to_le_bytes());
            }
        };
        for model in [&self.params, &self.adam.m, &self.adam.v] {
            for t in model.tensors() {
                put(t);
            }
        }
        for c in &self.codebook.centroids {
            put(c);
        }
        put(&self.scaler.person_mean);
        put(&self.scaler.person_std);
        put(&self.scaler.descriptor_mean);
        put(&self.scaler.descriptor_std);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint"));
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let header_len = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        let header_len = usize::try_from(header_len).map_err(|_| bad("header too large"))?;
        let header: Header = serde_json::from_slice(r.take(header_len)?).map_err(|e| bad(e.to_string()))?;

        let cfg = header.config;
        cfg.validate()?;
        if header.config_hash != cfg.config_hash() {
            return Err(Error::ConfigMismatch("stored configuration hash does not match its contents".into()));
        }
        let dims = header.dims;
        dims.validate().map_err(|e| bad(e.to_string()))?;
        let expected_dims = ModelDims {
            input_dim: cfg.person_dim(),
            descriptor_dim: cfg.descriptor_dim(),
            sub_hidden: cfg.model.sub_hidden,
            fusion_hidden: cfg.model.fusion_hidden,
            persons: cfg.persons,
            classes: header.classes.len(),
            share_sub: cfg.model.share_sub,
        };
        if dims != expected_dims {
            return Err(bad("model dimensions disagree with the configuration"));
        }
        if header.codebook_k != cfg.cooccurrence.k || header.codebook_dim != cfg.embedding_dim {
            return Err(bad("codebook shape disagrees with the configuration"));
        }
        header.adam.config.validate().map_err(|e| bad(e.to_string()))?;
        if header.epoch_losses.iter().any(|l| !l.is_finite()) {
            return Err(bad("non-finite epoch loss"));
        }

        let params_n = param_count(&dims).ok_or_else(|| bad("model too large"))?;
        let pd = dims.input_dim;
        let dd = dims.descriptor_dim;
        let total = params_n
            .checked_mul(3)
            .and_then(|n| n.checked_add(header.codebook_k.checked_mul(header.codebook_dim)?))
            .and_then(|n| n.checked_add(2 * pd + 2 * dd))
            .ok_or_else(|| bad("model too large"))?;
        if r.bytes.len() as u128 != total as u128 * 8 {
            return Err(bad(format!("expected {} data bytes, found {}", total as u128 * 8, r.bytes.len())));
        }

        let mut params = ModelParams::zeros(dims);
        let shapes_match = header.tensors.len() == params.tensor_specs().len()
            && header
                .tensors
                .iter()
                .zip(params.tensor_specs())
                .all(|(h, s)| h.name == s.name && h.rows == s.rows && h.cols == s.cols);
        if !shapes_match {
            return Err(bad("tensor table disagrees with the model dimensions"));
        }
        let mut adam = AdamState::new(&params, header.adam.config);
        adam.step = header.adam.step;
        for model in [&mut params, &mut adam.m, &mut adam.v] {
            for t in model.tensors_mut() {
                r.fill(t)?;
            }
        }
        let mut centroids = Vec::with_capacity(header.codebook_k);
        for _ in 0..header.codebook_k {
            let mut c = vec![0.0; header.codebook_dim];
            r.fill(&mut c)?;
            centroids.push(c);
        }
        let mut scaler = FeatureScaler::identity(pd, dd);
        r.fill(&mut scaler.person_mean)?;
        r.fill(&mut scaler.person_std)?;
        r.fill(&mut scaler.descriptor_mean)?;
        r.fill(&mut scaler.descriptor_std)?;
        if scaler.person_std.iter().chain(&scaler.descriptor_std).any(|&s| s <= 0.0) {
            return Err(bad("scaler deviations must be positive"));
        }

        let seed = unhex32(&header.rng.seed).ok_or_else(|| bad("bad generator seed"))?;
        let word_pos: u128 = header.rng.word_pos.parse().map_err(|_| bad("bad generator position"))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(header.rng.stream);
        rng.set_word_pos(word_pos);

        Ok(Checkpoint {
            config: cfg,
            classes: header.classes,
            codebook: Codebook {
                seed: header.codebook_seed,
                centroids,
            },
            scaler,
            params,
            adam,
            rng,
            epoch_losses: header.epoch_losses,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
