//! Two-level recurrent classifier.
//!
//! Each person's per-segment feature vector runs through a sub-cell. At
//! every segment the sub-cell hidden states and the flattened co-occurrence
//! descriptor are concatenated and fed to a fusion cell; the fusion cell's
//! final hidden state is projected to class logits.
//!
//! Masked segments are skipped entirely (all states carry over). A person
//! missing from a segment keeps its previous sub-cell state.

mod adam;
mod gradcheck;
mod lstm;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, grad_check_seeded, grad_check_with, GradCheckReport, ParamId, DENOM_FLOOR};
pub use lstm::{cell_step, CellParams, Gate};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use lstm::{backward_step, forward_step, StepCache};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    /// Per-person feature length.
    pub input_dim: usize,
    /// Flattened descriptor length.
    pub descriptor_dim: usize,
    pub sub_hidden: usize,
    pub fusion_hidden: usize,
    pub persons: usize,
    pub classes: usize,
    /// One sub-cell shared by all persons, or one per person.
    pub share_sub: bool,
}

impl ModelDims {
    pub fn fusion_input(&self) -> usize {
        self.persons * self.sub_hidden + self.descriptor_dim
    }

    pub fn sub_cells(&self) -> usize {
        if self.share_sub {
            1
        } else {
            self.persons
        }
    }

    fn sub_index(&self, person: usize) -> usize {
        if self.share_sub {
            0
        } else {
            person
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sub_hidden == 0 || self.fusion_hidden == 0 || self.persons == 0 || self.classes < 2 {
            return Err(Error::InvalidArgument(format!("unusable model dimensions {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitDist {
    /// Uniform in `[-scale, scale]`.
    #[default]
    Uniform,
    /// Normal with mean 0 and standard deviation `scale`.
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub dist: InitDist,
    pub scale: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        InitConfig {
            dist: InitDist::Uniform,
            scale: 0.08,
        }
    }
}

/// Layout of one parameter tensor inside [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    /// Weights are L2-regularized; biases are not.
    pub is_weight: bool,
    /// Hidden size of the owning cell when rows are stacked gates.
    pub gate_hidden: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub subs: Vec<CellParams>,
    pub fusion: CellParams,
    /// `classes x fusion_hidden`, row-major.
    pub out_w: Vec<f64>,
    pub out_b: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(dims: ModelDims) -> Self {
        ModelParams {
            dims,
            subs: (0..dims.sub_cells())
                .map(|_| CellParams::zeros(dims.input_dim, dims.sub_hidden))
                .collect(),
            fusion: CellParams::zeros(dims.fusion_input(), dims.fusion_hidden),
            out_w: vec![0.0; dims.classes * dims.fusion_hidden],
            out_b: vec![0.0; dims.classes],
        }
    }

    pub fn init<R: Rng>(dims: ModelDims, init: &InitConfig, rng: &mut R) -> Result<Self> {
        dims.validate()?;
        if !(init.scale >= 0.0) || !init.scale.is_finite() {
            return Err(Error::InvalidArgument(format!("init scale {} must be finite and nonnegative", init.scale)));
        }
        let mut p = ModelParams::zeros(dims);
        let normal = Normal::new(0.0, init.scale).expect("checked scale");
        for t in p.tensors_mut() {
            for w in t.iter_mut() {
                *w = match init.dist {
                    InitDist::Uniform => rng.gen_range(-1.0..=1.0) * init.scale,
                    InitDist::Normal => normal.sample(rng),
                };
            }
        }
        Ok(p)
    }

    pub fn tensor_specs(&self) -> Vec<TensorSpec> {
        let mut out = Vec::new();
        let mut cell = |prefix: String, c: &CellParams| {
            let rows = 4 * c.hidden_dim;
            let gates = Some(c.hidden_dim);
            out.push(TensorSpec { name: format!("{prefix}.w_x"), rows, cols: c.input_dim, is_weight: true, gate_hidden: gates });
            out.push(TensorSpec { name: format!("{prefix}.w_h"), rows, cols: c.hidden_dim, is_weight: true, gate_hidden: gates });
            out.push(TensorSpec { name: format!("{prefix}.b"), rows, cols: 1, is_weight: false, gate_hidden: gates });
        };
        for (i, s) in self.subs.iter().enumerate() {
            cell(format!("sub{i}"), s);
        }
        cell("fusion".into(), &self.fusion);
        let (classes, hidden) = (self.dims.classes, self.dims.fusion_hidden);
        out.push(TensorSpec { name: "out.w".into(), rows: classes, cols: hidden, is_weight: true, gate_hidden: None });
        out.push(TensorSpec { name: "out.b".into(), rows: classes, cols: 1, is_weight: false, gate_hidden: None });
        out
    }

    /// Tensors in [`ModelParams::tensor_specs`] order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for c in self.subs.iter().chain(std::iter::once(&self.fusion)) {
            out.extend([c.w_x.as_slice(), c.w_h.as_slice(), c.b.as_slice()]);
        }
        out.extend([self.out_w.as_slice(), self.out_b.as_slice()]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for c in self.subs.iter_mut().chain(std::iter::once(&mut self.fusion)) {
            out.push(c.w_x.as_mut_slice());
            out.push(c.w_h.as_mut_slice());
            out.push(c.b.as_mut_slice());
        }
        out.push(self.out_w.as_mut_slice());
        out.push(self.out_b.as_mut_slice());
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    /// Sum of squared weights (biases excluded).
    pub fn weight_norm2(&self) -> f64 {
        self.tensor_specs()
            .iter()
            .zip(self.tensors())
            .filter(|(s, _)| s.is_weight)
            .map(|(_, t)| t.iter().map(|w| w * w).sum::<f64>())
            .sum()
    }
}

/// One segment of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentInput {
    /// Per-person feature vectors; `None` masks the person in this segment.
    pub persons: Vec<Option<Vec<f64>>>,
    /// Normalized co-occurrence descriptor, flattened row-major.
    pub descriptor: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSample {
    /// `None` marks a padded segment.
    pub segments: Vec<Option<SegmentInput>>,
    pub label: usize,
}

impl SequenceSample {
    pub fn real_segments(&self) -> usize {
        self.segments.iter().filter(|s| s.is_some()).count()
    }
}

struct SegmentTape {
    subs: Vec<Option<StepCache>>,
    fusion: StepCache,
}

struct Tape {
    segments: Vec<SegmentTape>,
    final_h: Vec<f64>,
    logits: Vec<f64>,
}

fn check_sample(dims: &ModelDims, sample: &SequenceSample) -> Result<()> {
    if sample.label >= dims.classes {
        return Err(Error::Shape(format!("label {} outside {} classes", sample.label, dims.classes)));
    }
    for (t, seg) in sample.segments.iter().enumerate() {
        let Some(seg) = seg else { continue };
        if seg.persons.len() != dims.persons {
            return Err(Error::Shape(format!("segment {t}: {} persons, model expects {}", seg.persons.len(), dims.persons)));
        }
        if seg.descriptor.len() != dims.descriptor_dim {
            return Err(Error::Shape(format!(
                "segment {t}: descriptor of {} values, model expects {}",
                seg.descriptor.len(),
                dims.descriptor_dim
            )));
        }
        if let Some(v) = seg.persons.iter().flatten().find(|v| v.len() != dims.input_dim) {
            return Err(Error::Shape(format!("segment {t}: person vector of {} values, model expects {}", v.len(), dims.input_dim)));
        }
    }
    Ok(())
}

fn run(params: &ModelParams, sample: &SequenceSample) -> Result<Tape> {
    let dims = &params.dims;
    check_sample(dims, sample)?;
    let hs = dims.sub_hidden;
    let mut sub_state: Vec<(Vec<f64>, Vec<f64>)> = vec![(vec![0.0; hs], vec![0.0; hs]); dims.persons];
    let mut h = vec![0.0; dims.fusion_hidden];
    let mut c = vec![0.0; dims.fusion_hidden];
    let mut segments = Vec::new();
    for seg in sample.segments.iter().flatten() {
        let mut subs = Vec::with_capacity(dims.persons);
        let mut ff = Vec::with_capacity(dims.fusion_input());
        for (m, x) in seg.persons.iter().enumerate() {
            let cache = x.as_ref().map(|x| {
                let (hm, cm) = &sub_state[m];
                forward_step(&params.subs[dims.sub_index(m)], x, hm, cm)
            });
            if let Some(cache) = &cache {
                sub_state[m] = (cache.h.clone(), cache.c.clone());
            }
            ff.extend_from_slice(&sub_state[m].0);
            subs.push(cache);
        }
        ff.extend_from_slice(&seg.descriptor);
        let fusion = forward_step(&params.fusion, &ff, &h, &c);
        h.clone_from(&fusion.h);
        c.clone_from(&fusion.c);
        segments.push(SegmentTape { subs, fusion });
    }
    let mut logits = params.out_b.clone();
    for (l, row) in logits.iter_mut().zip(params.out_w.chunks_exact(dims.fusion_hidden)) {
        *l += row.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(Tape {
        segments,
        final_h: h,
        logits,
    })
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

/// Class probabilities for one sample.
pub fn forward(params: &ModelParams, sample: &SequenceSample) -> Result<Vec<f64>> {
    Ok(softmax(&run(params, sample)?.logits))
}

/// Most probable class, lowest index on ties.
pub fn predict(params: &ModelParams, sample: &SequenceSample) -> Result<usize> {
    let p = forward(params, sample)?;
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Mean cross-entropy over `batch` plus `lambda_loss / 2` times the squared
/// weight norm, with exact gradients by back-propagation through time.
pub fn loss_and_grad(params: &ModelParams, batch: &[SequenceSample], lambda_loss: f64) -> Result<(f64, ModelParams)> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let dims = params.dims;
    let scale = 1.0 / batch.len() as f64;
    let mut grads = ModelParams::zeros(dims);
    let mut loss = 0.0;
    for sample in batch {
        let tape = run(params, sample)?;
        loss += (log_sum_exp(&tape.logits) - tape.logits[sample.label]) * scale;
        backprop(params, &tape, sample.label, scale, &mut grads);
    }
    if lambda_loss != 0.0 {
        loss += 0.5 * lambda_loss * params.weight_norm2();
        let specs = params.tensor_specs();
        for ((spec, g), w) in specs.iter().zip(grads.tensors_mut()).zip(params.tensors()) {
            if spec.is_weight {
                for (gv, wv) in g.iter_mut().zip(w) {
                    *gv += lambda_loss * wv;
                }
            }
        }
    }
    Ok((loss, grads))
}

/// Loss only, without gradients.
pub fn loss(params: &ModelParams, batch: &[SequenceSample], lambda_loss: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut total = 0.0;
    for sample in batch {
        let tape = run(params, sample)?;
        total += (log_sum_exp(&tape.logits) - tape.logits[sample.label]) / batch.len() as f64;
    }
    Ok(total + 0.5 * lambda_loss * params.weight_norm2())
}

fn backprop(params: &ModelParams, tape: &Tape, label: usize, scale: f64, grads: &mut ModelParams) {
    let dims = &params.dims;
    let fh = dims.fusion_hidden;
    let hs = dims.sub_hidden;
    let probs = softmax(&tape.logits);
    let dlogits: Vec<f64> = probs
        .iter()
        .enumerate()
        .map(|(k, p)| (p - if k == label { 1.0 } else { 0.0 }) * scale)
        .collect();

    let mut dh = vec![0.0; fh];
    for (k, d) in dlogits.iter().enumerate() {
        grads.out_b[k] += d;
        let row = &params.out_w[k * fh..(k + 1) * fh];
        let grow = &mut grads.out_w[k * fh..(k + 1) * fh];
        for j in 0..fh {
            grow[j] += d * tape.final_h[j];
            dh[j] += d * row[j];
        }
    }
    let mut dc = vec![0.0; fh];
    let mut dh_sub = vec![vec![0.0; hs]; dims.persons];
    let mut dc_sub = vec![vec![0.0; hs]; dims.persons];

    for seg in tape.segments.iter().rev() {
        let g = backward_step(&params.fusion, &seg.fusion, &dh, &dc, &mut grads.fusion);
        dh = g.dh_prev;
        dc = g.dc_prev;
        for m in 0..dims.persons {
            for (acc, d) in dh_sub[m].iter_mut().zip(&g.dx[m * hs..(m + 1) * hs]) {
                *acc += d;
            }
            if let Some(cache) = &seg.subs[m] {
                let idx = dims.sub_index(m);
                let gs = backward_step(&params.subs[idx], cache, &dh_sub[m], &dc_sub[m], &mut grads.subs[idx]);
                dh_sub[m] = gs.dh_prev;
                dc_sub[m] = gs.dc_prev;
            }
        }
    }
}
