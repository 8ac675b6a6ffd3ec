use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{loss, loss_and_grad, Gate, InitConfig, InitDist, ModelDims, ModelParams, SegmentInput, SequenceSample};
use crate::error::{Error, Result};

/// Floor on the relative-error denominator. Central differences at a 1e-5
/// step carry a few ulps of the loss over 2h of rounding noise (about 1e-11),
/// so partials smaller than this are compared in absolute terms instead.
pub const DENOM_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamId {
    pub tensor: String,
    pub row: usize,
    pub col: usize,
    pub gate: Option<Gate>,
    /// Hidden unit within the gate block, when `gate` is set.
    pub unit: Option<usize>,
}

impl fmt::Display for ParamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.gate, self.unit) {
            (Some(g), Some(u)) => write!(f, "{}[{g} gate, unit {u}, col {}]", self.tensor, self.col),
            _ => write!(f, "{}[{}, {}]", self.tensor, self.row, self.col),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst: Option<ParamId>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
    /// Partials whose magnitude fell below [`DENOM_FLOOR`].
    pub floored: usize,
}

/// Compares back-propagated gradients of the unregularized loss against
/// central finite differences.
pub fn grad_check(params: &ModelParams, sample: &SequenceSample, fd_step: f64) -> Result<GradCheckReport> {
    let batch = std::slice::from_ref(sample);
    let (_, analytic) = loss_and_grad(params, batch, 0.0)?;
    grad_check_with(params, batch, 0.0, fd_step, &analytic)
}

/// Checks caller-supplied analytic gradients against central differences of
/// the loss over `batch`.
pub fn grad_check_with(
    params: &ModelParams,
    batch: &[SequenceSample],
    lambda_loss: f64,
    fd_step: f64,
    analytic: &ModelParams,
) -> Result<GradCheckReport> {
    if !(fd_step > 0.0) || !fd_step.is_finite() {
        return Err(Error::InvalidArgument(format!("finite-difference step {fd_step} must be positive")));
    }
    if analytic.dims != params.dims {
        return Err(Error::Shape("analytic gradients are not shaped like the parameters".into()));
    }
    let specs = params.tensor_specs();
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: 0,
        floored: 0,
    };
    let analytic_tensors = analytic.tensors();
    for (ti, spec) in specs.iter().enumerate() {
        for k in 0..spec.rows * spec.cols {
            let original = probe.tensors()[ti][k];
            probe.tensors_mut()[ti][k] = original + fd_step;
            let up = loss(&probe, batch, lambda_loss)?;
            probe.tensors_mut()[ti][k] = original - fd_step;
            let down = loss(&probe, batch, lambda_loss)?;
            probe.tensors_mut()[ti][k] = original;

            let numeric = (up - down) / (2.0 * fd_step);
            let a = analytic_tensors[ti][k];
            let scale = a.abs().max(numeric.abs());
            if !scale.is_finite() {
                return Err(Error::Numeric(format!("non-finite gradient in {}", spec.name)));
            }
            if scale < DENOM_FLOOR {
                report.floored += 1;
            }
            report.checked += 1;
            let rel = (a - numeric).abs() / scale.max(DENOM_FLOOR);
            if rel > report.max_rel_error || report.worst.is_none() {
                let (row, col) = (k / spec.cols, k % spec.cols);
                let gate = spec.gate_hidden.map(|h| Gate::of_row(row, h));
                report.max_rel_error = rel;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
                report.worst = Some(ParamId {
                    tensor: spec.name.clone(),
                    row,
                    col,
                    gate,
                    unit: spec.gate_hidden.map(|h| row % h),
                });
            }
        }
    }
    Ok(report)
}

/// Checks a randomly initialized model on a random sample of `segments`
/// steps. Every third segment drops its last person and the final segment
/// is padding, so masking is exercised too.
pub fn grad_check_seeded(dims: ModelDims, segments: usize, seed: u64, fd_step: f64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = InitConfig {
        dist: InitDist::Uniform,
        scale: 0.3,
    };
    let params = ModelParams::init(dims, &init, &mut rng)?;
    let mut v = |n: usize| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    let mut steps: Vec<Option<SegmentInput>> = (0..segments)
        .map(|t| {
            let mut persons: Vec<Option<Vec<f64>>> = (0..dims.persons).map(|_| Some(v(dims.input_dim))).collect();
            if t % 3 == 1 && dims.persons > 1 {
                persons[dims.persons - 1] = None;
            }
            Some(SegmentInput {
                persons,
                descriptor: v(dims.descriptor_dim),
            })
        })
        .collect();
    if segments > 1 {
        steps[segments - 1] = None;
    }
    let sample = SequenceSample {
        segments: steps,
        label: (seed % dims.classes as u64) as usize,
    };
    grad_check(&params, &sample, fd_step)
}

#[cfg(test)]
mod tests {
    use super::super::testutil::*;
    use super::super::CellParams;
    use super::*;

    #[test]
    fn tiny_model_passes() {
        for shared in [true, false] {
            let dims = tiny_dims(shared);
            let p = random_params(dims, 40, 0.5);
            let mut s = random_sample(&dims, 4, 2, 41);
            s.segments[2].as_mut().unwrap().persons[0] = None;
            s.segments.insert(1, None);
            let r = grad_check(&p, &s, 1e-5).unwrap();
            assert!(r.max_rel_error < 1e-4, "{r:?}");
            assert!(r.checked > 0);
        }
    }

    #[test]
    fn l2_term_is_checked_too() {
        let dims = tiny_dims(true);
        let p = random_params(dims, 50, 0.5);
        let batch = [random_sample(&dims, 3, 0, 51), random_sample(&dims, 2, 1, 52)];
        let (_, g) = loss_and_grad(&p, &batch, 0.05).unwrap();
        let r = grad_check_with(&p, &batch, 0.05, 1e-5, &g).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    fn scale_forget_rows(c: &mut CellParams, by: f64) {
        let h = c.hidden_dim;
        for row in h..2 * h {
            for v in &mut c.w_x[row * c.input_dim..(row + 1) * c.input_dim] {
                *v *= by;
            }
            for v in &mut c.w_h[row * h..(row + 1) * h] {
                *v *= by;
            }
            c.b[row] *= by;
        }
    }

    #[test]
    fn corrupted_forget_gradient_is_named() {
        let dims = tiny_dims(true);
        let p = random_params(dims, 60, 0.5);
        let batch = [random_sample(&dims, 4, 1, 61)];
        let (_, mut g) = loss_and_grad(&p, &batch, 0.0).unwrap();
        scale_forget_rows(&mut g.fusion, 3.0);
        let r = grad_check_with(&p, &batch, 0.0, 1e-5, &g).unwrap();
        assert!(r.max_rel_error > 1e-2);
        let worst = r.worst.unwrap();
        assert_eq!(worst.gate, Some(Gate::Forget), "{worst}");
        assert!(worst.tensor.starts_with("fusion"));
    }

    #[test]
    fn zero_model_is_compared_against_the_floor() {
        let dims = tiny_dims(true);
        let p = ModelParams::zeros(dims);
        let mut s = random_sample(&dims, 2, 0, 0);
        for seg in s.segments.iter_mut().flatten() {
            seg.descriptor.fill(0.0);
            for x in seg.persons.iter_mut().flatten() {
                x.fill(0.0);
            }
        }
        let r = grad_check(&p, &s, 1e-5).unwrap();
        assert!(r.floored > 0);
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }

    #[test]
    fn seeded_check_is_reproducible() {
        let dims = tiny_dims(false);
        let a = grad_check_seeded(dims, 4, 3, 1e-5).unwrap();
        assert_eq!(a, grad_check_seeded(dims, 4, 3, 1e-5).unwrap());
        assert!(a.max_rel_error < 1e-4, "{a:?}");
    }

    #[test]
    fn rejects_bad_step() {
        let dims = tiny_dims(true);
        let p = ModelParams::zeros(dims);
        let s = random_sample(&dims, 1, 0, 0);
        assert!(grad_check(&p, &s, 0.0).is_err());
    }
}
