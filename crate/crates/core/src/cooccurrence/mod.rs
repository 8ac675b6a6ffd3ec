//! Full-body sub-volume co-occurrence descriptor.
//!
//! Each tracked object contributes one sub-volume per segment: its averaged
//! appearance vector, its displacement across the segment and its mean
//! position. Sub-volumes are quantized against a k-means codebook, and every
//! ordered pair of objects in a segment adds
//!
//! ```text
//! (s_i / eps_t) * (r_t / dist_ij) * log((|w_i - f_i| + |w_j - f_j|) / 2 + psi)
//! ```
//!
//! to cell `(k_i, k_j)` of a `K x K` matrix, where `s_i` is the length of the
//! displacement, `eps_t` the sum of `s` over the segment and `r_t` half the
//! sum of all ordered pairwise distances. The matrix accumulates from the
//! first segment on and is divided by the number of accumulated terms when
//! read.

mod kmeans;

pub use kmeans::{kmeans_fit, kmeans_fit_traced, Codebook, KMeansFit, CODEBOOK_MAGIC, CODEBOOK_VERSION};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoocConfig {
    /// Codebook size.
    pub k: usize,
    /// Offset inside the log of the pair score.
    pub psi: f64,
    /// Floor for the motion total and pair distances.
    pub eps: f64,
    pub kmeans_max_iter: usize,
}

impl Default for CoocConfig {
    fn default() -> Self {
        CoocConfig {
            k: 20,
            psi: std::f64::consts::E,
            eps: 1e-6,
            kmeans_max_iter: 100,
        }
    }
}

impl CoocConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidArgument(format!("cooccurrence.k must be at least 2, got {}", self.k)));
        }
        if !(self.psi > 0.0) || !(self.eps > 0.0) {
            return Err(Error::InvalidArgument("cooccurrence.psi and cooccurrence.eps must be positive".into()));
        }
        Ok(())
    }
}

/// One object's summary over one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SubVolume {
    /// Mean appearance vector.
    pub f: Vec<f64>,
    pub dx: f64,
    pub dy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Codeword index; set by [`SubVolume::quantize`].
    pub k: usize,
    pub object_id: u64,
    pub segment: usize,
}

impl SubVolume {
    pub fn center(&self) -> Point {
        Point::new(self.cx, self.cy)
    }

    /// Length of the segment displacement.
    pub fn motion(&self) -> f64 {
        self.dx.hypot(self.dy)
    }

    pub fn quantize(&mut self, cb: &Codebook) {
        self.k = cb.assign(&self.f);
    }
}

/// Averages one object's per-frame vectors and positions over a segment.
pub fn build_subvolume(
    frame_vectors: &[Vec<f64>],
    positions: &[Point],
    object_id: u64,
    segment: usize,
) -> Result<SubVolume> {
    if frame_vectors.is_empty() || positions.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "object {object_id}, segment {segment}: empty segment"
        )));
    }
    if frame_vectors.len() != positions.len() {
        return Err(Error::Shape(format!(
            "{} frame vectors but {} positions",
            frame_vectors.len(),
            positions.len()
        )));
    }
    let dim = frame_vectors[0].len();
    if frame_vectors.iter().any(|v| v.len() != dim) {
        return Err(Error::Shape("frame vectors differ in length".into()));
    }
    let n = frame_vectors.len() as f64;
    let mut f = vec![0.0; dim];
    for v in frame_vectors {
        for (acc, x) in f.iter_mut().zip(v) {
            *acc += x;
        }
    }
    f.iter_mut().for_each(|x| *x /= n);
    let d = positions[positions.len() - 1] - positions[0];
    let c = Point::mean(positions.iter().copied()).expect("nonempty");
    Ok(SubVolume {
        f,
        dx: d.x,
        dy: d.y,
        cx: c.x,
        cy: c.y,
        k: 0,
        object_id,
        segment,
    })
}

pub fn pair_distance(a: &SubVolume, b: &SubVolume) -> f64 {
    a.center().distance(b.center())
}

/// Half the sum of distances over ordered pairs, i.e. the sum over
/// unordered pairs.
pub fn global_distance(subvols: &[SubVolume]) -> Result<f64> {
    if subvols.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "global distance needs at least 2 sub-volumes, got {}",
            subvols.len()
        )));
    }
    let mut total = 0.0;
    for (i, a) in subvols.iter().enumerate() {
        for (j, b) in subvols.iter().enumerate() {
            if i != j {
                total += pair_distance(a, b);
            }
        }
    }
    Ok(total / 2.0)
}

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Log of the mean quantization error of the two features, offset by `psi`.
pub fn pair_score(f_i: &[f64], w_i: &[f64], f_j: &[f64], w_j: &[f64], psi: f64) -> f64 {
    ((norm_diff(w_i, f_i) + norm_diff(w_j, f_j)) / 2.0 + psi).ln()
}

/// Cumulative `K x K` descriptor with its term count.
#[derive(Debug, Clone, PartialEq)]
pub struct CoocMatrix {
    k: usize,
    sum: Vec<f64>,
    terms: u64,
}

impl CoocMatrix {
    pub fn new(k: usize) -> Self {
        CoocMatrix {
            k,
            sum: vec![0.0; k * k],
            terms: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Number of accumulated pair terms (the normalizer).
    pub fn terms(&self) -> u64 {
        self.terms
    }

    /// Accumulated value before normalization.
    pub fn raw(&self, row: usize, col: usize) -> f64 {
        self.sum[row * self.k + col]
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        if self.terms == 0 {
            0.0
        } else {
            self.raw(row, col) / self.terms as f64
        }
    }

    /// Normalized matrix flattened row-major.
    pub fn normalized(&self) -> Vec<f64> {
        (0..self.k * self.k)
            .map(|i| self.get(i / self.k, i % self.k))
            .collect()
    }

    /// Normalized matrix as delimiter-separated rows.
    pub fn to_delimited(&self, sep: char) -> String {
        let mut out = String::new();
        for r in 0..self.k {
            let row: Vec<String> = (0..self.k).map(|c| format!("{:?}", self.get(r, c))).collect();
            out.push_str(&row.join(&sep.to_string()));
            out.push('\n');
        }
        out
    }

    /// Adds one segment's ordered-pair terms. The sub-volumes must already
    /// carry their codeword index.
    pub fn update(&mut self, subvols: &[SubVolume], cb: &Codebook, cfg: &CoocConfig) -> Result<()> {
        if cb.k() != self.k {
            return Err(Error::Shape(format!("codebook has {} words, matrix is {}x{}", cb.k(), self.k, self.k)));
        }
        if let Some(sv) = subvols.iter().find(|sv| sv.k >= self.k || sv.f.len() != cb.dim()) {
            return Err(Error::Shape(format!("sub-volume of object {} does not fit the codebook", sv.object_id)));
        }
        let r = global_distance(subvols)?;
        let total_motion = subvols.iter().map(SubVolume::motion).sum::<f64>().max(cfg.eps);
        for (i, a) in subvols.iter().enumerate() {
            let share = a.motion() / total_motion;
            for (j, b) in subvols.iter().enumerate() {
                if i == j {
                    continue;
                }
                let dist = pair_distance(a, b).max(cfg.eps);
                let score = pair_score(&a.f, cb.centroid(a.k), &b.f, cb.centroid(b.k), cfg.psi);
                self.sum[a.k * self.k + b.k] += share * (r / dist) * score;
                self.terms += 1;
            }
        }
        Ok(())
    }
}

/// Functional form of [`CoocMatrix::update`].
pub fn update_matrix(
    mut m: CoocMatrix,
    subvols: &[SubVolume],
    cb: &Codebook,
    cfg: &CoocConfig,
) -> Result<CoocMatrix> {
    m.update(subvols, cb, cfg)?;
    Ok(m)
}
