//! Gated recurrent cell (input, forget, output gates and a tanh candidate).
//!
//! Pre-activations are stacked as `z = W_x x + W_h h + b` with the four
//! gates occupying consecutive blocks of `hidden_dim` rows in the order
//! input, forget, output, candidate.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gate {
    Input,
    Forget,
    Output,
    Candidate,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Input, Gate::Forget, Gate::Output, Gate::Candidate];

    /// Gate owning pre-activation row `row` of a cell with `hidden` units.
    pub fn of_row(row: usize, hidden: usize) -> Gate {
        Gate::ALL[row / hidden]
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gate::Input => "input",
            Gate::Forget => "forget",
            Gate::Output => "output",
            Gate::Candidate => "candidate",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// `4H x I`, row-major.
    pub w_x: Vec<f64>,
    /// `4H x H`, row-major.
    pub w_h: Vec<f64>,
    pub b: Vec<f64>,
}

impl CellParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        let rows = 4 * hidden_dim;
        CellParams {
            input_dim,
            hidden_dim,
            w_x: vec![0.0; rows * input_dim],
            w_h: vec![0.0; rows * hidden_dim],
            b: vec![0.0; rows],
        }
    }

    pub fn check_shapes(&self) -> Result<()> {
        let rows = 4 * self.hidden_dim;
        if self.w_x.len() != rows * self.input_dim || self.w_h.len() != rows * self.hidden_dim || self.b.len() != rows {
            return Err(Error::Shape(format!(
                "cell parameters do not match input {} / hidden {}",
                self.input_dim, self.hidden_dim
            )));
        }
        Ok(())
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn matvec_add(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// Adds `W^T dz` into `out`.
fn matvec_t_add(w: &[f64], cols: usize, dz: &[f64], out: &mut [f64]) {
    for (d, row) in dz.iter().zip(w.chunks_exact(cols)) {
        if *d == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * d;
        }
    }
}

fn outer_add(dz: &[f64], x: &[f64], out: &mut [f64]) {
    for (d, row) in dz.iter().zip(out.chunks_exact_mut(x.len())) {
        if *d == 0.0 {
            continue;
        }
        for (o, xv) in row.iter_mut().zip(x) {
            *o += d * xv;
        }
    }
}

/// Intermediate values of one step, kept for the backward pass.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub g: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

pub(crate) fn forward_step(p: &CellParams, x: &[f64], h: &[f64], c: &[f64]) -> StepCache {
    let hd = p.hidden_dim;
    let mut z = p.b.clone();
    matvec_add(&p.w_x, p.input_dim, x, &mut z);
    matvec_add(&p.w_h, hd, h, &mut z);
    let i: Vec<f64> = z[..hd].iter().map(|&v| sigmoid(v)).collect();
    let f: Vec<f64> = z[hd..2 * hd].iter().map(|&v| sigmoid(v)).collect();
    let o: Vec<f64> = z[2 * hd..3 * hd].iter().map(|&v| sigmoid(v)).collect();
    let g: Vec<f64> = z[3 * hd..].iter().map(|&v| v.tanh()).collect();
    let c_new: Vec<f64> = (0..hd).map(|k| f[k] * c[k] + i[k] * g[k]).collect();
    let tanh_c: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
    let h_new: Vec<f64> = (0..hd).map(|k| o[k] * tanh_c[k]).collect();
    StepCache {
        x: x.to_vec(),
        h_prev: h.to_vec(),
        c_prev: c.to_vec(),
        i,
        f,
        o,
        g,
        tanh_c,
        h: h_new,
        c: c_new,
    }
}

/// Gradients with respect to the step inputs.
pub(crate) struct StepGrads {
    pub dx: Vec<f64>,
    pub dh_prev: Vec<f64>,
    pub dc_prev: Vec<f64>,
}

/// Back-propagates `dh`, `dc` (loss gradients w.r.t. this step's outputs)
/// and accumulates parameter gradients into `grads`.
pub(crate) fn backward_step(
    p: &CellParams,
    cache: &StepCache,
    dh: &[f64],
    dc: &[f64],
    grads: &mut CellParams,
) -> StepGrads {
    let hd = p.hidden_dim;
    let mut dz = vec![0.0; 4 * hd];
    let mut dc_prev = vec![0.0; hd];
    for k in 0..hd {
        let (i, f, o, g, tc) = (cache.i[k], cache.f[k], cache.o[k], cache.g[k], cache.tanh_c[k]);
        let dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
        dz[k] = dct * g * i * (1.0 - i);
        dz[hd + k] = dct * cache.c_prev[k] * f * (1.0 - f);
        dz[2 * hd + k] = dh[k] * tc * o * (1.0 - o);
        dz[3 * hd + k] = dct * i * (1.0 - g * g);
        dc_prev[k] = dct * f;
    }
    outer_add(&dz, &cache.x, &mut grads.w_x);
    outer_add(&dz, &cache.h_prev, &mut grads.w_h);
    for (b, d) in grads.b.iter_mut().zip(&dz) {
        *b += d;
    }
    let mut dx = vec![0.0; p.input_dim];
    matvec_t_add(&p.w_x, p.input_dim, &dz, &mut dx);
    let mut dh_prev = vec![0.0; hd];
    matvec_t_add(&p.w_h, hd, &dz, &mut dh_prev);
    StepGrads { dx, dh_prev, dc_prev }
}

/// One recurrent step: returns the new hidden and cell states.
pub fn cell_step(p: &CellParams, x: &[f64], h: &[f64], c: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    p.check_shapes()?;
    if x.len() != p.input_dim || h.len() != p.hidden_dim || c.len() != p.hidden_dim {
        return Err(Error::Shape(format!(
            "cell expects input {} and state {}, got {} / {} / {}",
            p.input_dim,
            p.hidden_dim,
            x.len(),
            h.len(),
            c.len()
        )));
    }
    let cache = forward_step(p, x, h, c);
    Ok((cache.h, cache.c))
}
