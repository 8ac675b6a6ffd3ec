//! Seeded k-means codebook.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const CODEBOOK_MAGIC: &str = "interact-codebook";
pub const CODEBOOK_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub seed: u64,
    pub centroids: Vec<Vec<f64>>,
}

/// Result of a traced fit.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub codebook: Codebook,
    /// Within-cluster squared error after each assignment pass.
    pub sse_history: Vec<f64>,
    pub labels: Vec<usize>,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], f: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = dist2(c, f);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

impl Codebook {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    /// Index of the nearest centroid, lowest index on ties.
    pub fn assign(&self, f: &[f64]) -> usize {
        nearest(&self.centroids, f).0
    }

    pub fn centroid(&self, k: usize) -> &[f64] {
        &self.centroids[k]
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{CODEBOOK_MAGIC} {CODEBOOK_VERSION}\nk {}\ndim {}\nseed {}\n",
            self.k(),
            self.dim(),
            self.seed
        );
        for c in &self.centroids {
            let row: Vec<String> = c.iter().map(|x| format!("{x:?}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: String| Error::format("codebook", m);
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let mut next = |what: &str| lines.next().ok_or_else(|| bad(format!("missing {what}")));
        if next("header")? != format!("{CODEBOOK_MAGIC} {CODEBOOK_VERSION}") {
            return Err(bad(format!("expected header \"{CODEBOOK_MAGIC} {CODEBOOK_VERSION}\"")));
        }
        let mut field = |name: &str| -> Result<u64> {
            let line = next(name)?;
            line.strip_prefix(name)
                .and_then(|rest| rest.trim().parse::<u64>().ok())
                .ok_or_else(|| bad(format!("expected \"{name} <integer>\", got {line:?}")))
        };
        let k = field("k")? as usize;
        let dim = field("dim")? as usize;
        let seed = field("seed")?;
        if k < 2 || dim == 0 {
            return Err(bad(format!("need k >= 2 and dim >= 1, got k={k} dim={dim}")));
        }
        let mut centroids = Vec::new();
        for line in lines {
            let row = line
                .split_whitespace()
                .map(|s| s.parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| bad(format!("bad centroid row {line:?}")))?;
            if row.len() != dim {
                return Err(bad(format!("centroid row has {} values, expected {dim}", row.len())));
            }
            centroids.push(row);
            if centroids.len() > k {
                break;
            }
        }
        if centroids.len() != k {
            return Err(bad(format!("expected {k} centroid rows")));
        }
        Ok(Codebook { seed, centroids })
    }
}

fn validate(samples: &[Vec<f64>], k: usize) -> Result<usize> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("k-means needs K >= 2, got {k}")));
    }
    if samples.len() < k {
        return Err(Error::TooFewSamples { needed: k, got: samples.len() });
    }
    let dim = samples[0].len();
    if dim == 0 || samples.iter().any(|s| s.len() != dim) {
        return Err(Error::Shape("k-means samples must share one nonzero dimension".into()));
    }
    if samples.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("k-means sample contains a non-finite value".into()));
    }
    Ok(dim)
}

fn seed_centroids(samples: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![samples[rng.gen_range(0..samples.len())].clone()];
    let mut d2: Vec<f64> = samples.iter().map(|s| dist2(s, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut pick = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            pick
        } else {
            rng.gen_range(0..samples.len())
        };
        let c = samples[pick].clone();
        for (d, s) in d2.iter_mut().zip(samples) {
            *d = d.min(dist2(s, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn assign_all(samples: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let mut sse = 0.0;
    let labels = samples
        .iter()
        .map(|s| {
            let (i, d) = nearest(centroids, s);
            sse += d;
            i
        })
        .collect();
    (labels, sse)
}

fn update(samples: &[Vec<f64>], labels: &[usize], old: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    let k = old.len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (s, &l) in samples.iter().zip(labels) {
        counts[l] += 1;
        for (acc, x) in sums[l].iter_mut().zip(s) {
            *acc += x;
        }
    }
    let mut taken = vec![false; samples.len()];
    for c in 0..k {
        if counts[c] > 0 {
            let n = counts[c] as f64;
            sums[c].iter_mut().for_each(|x| *x /= n);
        } else {
            // Re-seed an empty cluster at the sample farthest from its centroid.
            let mut far = None;
            for (i, (s, &l)) in samples.iter().zip(labels).enumerate() {
                if taken[i] {
                    continue;
                }
                let d = dist2(s, &old[l]);
                if far.is_none_or(|(_, best)| d > best) {
                    far = Some((i, d));
                }
            }
            let i = far.map_or(0, |(i, _)| i);
            taken[i] = true;
            sums[c] = samples[i].clone();
        }
    }
    sums
}

/// k-means++ seeding followed by alternating assignment and update until
/// the assignment stops changing or `max_iter` updates have run.
pub fn kmeans_fit(samples: &[Vec<f64>], k: usize, max_iter: usize, seed: u64) -> Result<Codebook> {
    kmeans_fit_traced(samples, k, max_iter, seed).map(|f| f.codebook)
}

pub fn kmeans_fit_traced(samples: &[Vec<f64>], k: usize, max_iter: usize, seed: u64) -> Result<KMeansFit> {
    let dim = validate(samples, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(samples, k, &mut rng);
    let (mut labels, sse) = assign_all(samples, &centroids);
    let mut sse_history = vec![sse];
    for _ in 0..max_iter {
        centroids = update(samples, &labels, &centroids, dim);
        let (next, sse) = assign_all(samples, &centroids);
        sse_history.push(sse);
        if next == labels {
            break;
        }
        labels = next;
    }
    Ok(KMeansFit {
        codebook: Codebook { seed, centroids },
        sse_history,
        labels,
    })
}
