//! Appearance-vector providers.
//!
//! Stand-ins for a convolutional backbone: the pipeline asks a provider for
//! a fixed-length vector at a joint patch or for a whole detection, keyed by
//! `(video, frame, person, site)`. Every provider answers the same query
//! with the same vector.
//!
//! Two file formats exist. The embedding table is line-oriented text:
//!
//! ```text
//! interact-embeddings 1 <dim>
//! <video> <frame> <person> <site> <v0> ... <v(dim-1)>
//! ```
//!
//! where `<site>` is a joint index `0..=14` or `body`, and lines starting
//! with `#` are comments. The synthetic signal spec is a JSON object tagged
//! `"format": "interact-synthetic-embeddings"`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::skeleton::JOINTS;

pub const TABLE_MAGIC: &str = "interact-embeddings";
pub const TABLE_VERSION: u32 = 1;
pub const SYNTHETIC_FORMAT: &str = "interact-synthetic-embeddings";
pub const SYNTHETIC_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Site {
    Joint(u8),
    /// The whole detection box.
    Body,
}

impl Site {
    fn code(self) -> u64 {
        match self {
            Site::Joint(j) => j as u64,
            Site::Body => 255,
        }
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Site::Joint(j) => write!(f, "{j}"),
            Site::Body => f.write_str("body"),
        }
    }
}

impl FromStr for Site {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        if s == "body" {
            return Ok(Site::Body);
        }
        match s.parse::<u8>() {
            Ok(j) if (j as usize) < JOINTS => Ok(Site::Joint(j)),
            _ => Err(format!("bad site {s:?}, expected a joint index or \"body\"")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingQuery {
    pub video: u64,
    pub frame: u64,
    pub person: u64,
    pub site: Site,
    pub center: Point,
    /// Patch side length in pixels; unused for [`Site::Body`].
    pub size: u32,
}

impl EmbeddingQuery {
    fn missing(&self) -> Error {
        Error::MissingEmbedding {
            video: self.video,
            frame: self.frame,
            person: self.person,
            site: self.site.to_string(),
        }
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, query: &EmbeddingQuery) -> Result<Vec<f64>>;
}

// splitmix64 finalizer folded over the words.
fn mix(seed: u64, words: &[u64]) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &w in words {
        h = h.wrapping_add(w).wrapping_add(0x9e37_79b9_7f4a_7c15);
        h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        h ^= h >> 31;
    }
    h
}

fn normal_vector(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Fixed random projection of the query position and site.
#[derive(Debug, Clone)]
pub struct ProjectionStub {
    dim: usize,
    basis: Vec<[f64; 4]>,
}

impl ProjectionStub {
    pub fn new(dim: usize, seed: u64) -> Self {
        let flat = normal_vector(mix(seed, &[0x5354_5542]), dim * 4);
        let basis = flat.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect();
        ProjectionStub { dim, basis }
    }
}

impl EmbeddingProvider for ProjectionStub {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, q: &EmbeddingQuery) -> Result<Vec<f64>> {
        let u = [q.center.x / 64.0, q.center.y / 64.0, q.site.code() as f64 / 16.0, 1.0];
        Ok(self
            .basis
            .iter()
            .map(|w| (w[0] * u[0] + w[1] * u[1] + w[2] * u[2] + w[3] * u[3]).tanh())
            .collect())
    }
}

type TableKey = (u64, u64, u64, Site);

/// Precomputed vectors looked up by key.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingTable {
    dim: usize,
    entries: BTreeMap<TableKey, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, video: u64, frame: u64, person: u64, site: Site, v: Vec<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Shape(format!("vector of {} values in a table of dimension {}", v.len(), self.dim)));
        }
        self.entries.insert((video, frame, person, site), v);
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines
            .next()
            .ok_or_else(|| Error::format("embedding table", "empty file"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let dim = match fields.as_slice() {
            [magic, version, dim] if *magic == TABLE_MAGIC => {
                if version.parse::<u32>().ok() != Some(TABLE_VERSION) {
                    return Err(Error::Parse { line: hline, message: format!("unsupported table version {version}") });
                }
                dim.parse::<usize>()
                    .ok()
                    .filter(|&d| d > 0)
                    .ok_or_else(|| Error::Parse { line: hline, message: format!("bad dimension {dim:?}") })?
            }
            _ => {
                return Err(Error::Parse {
                    line: hline,
                    message: format!("expected header \"{TABLE_MAGIC} {TABLE_VERSION} <dim>\""),
                })
            }
        };
        let mut table = EmbeddingTable::new(dim);
        for (line, l) in lines {
            let bad = |message: String| Error::Parse { line, message };
            let fields: Vec<&str> = l.split_whitespace().collect();
            if fields.len() != 4 + dim {
                return Err(bad(format!("expected {} fields, found {}", 4 + dim, fields.len())));
            }
            let int = |s: &str| s.parse::<u64>().map_err(|e| bad(format!("{s:?}: {e}")));
            let key = (int(fields[0])?, int(fields[1])?, int(fields[2])?, fields[3].parse::<Site>().map_err(bad)?);
            let v = fields[4..]
                .iter()
                .map(|s| match s.parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(x),
                    _ => Err(bad(format!("bad value {s:?}"))),
                })
                .collect::<Result<Vec<f64>>>()?;
            if table.entries.insert(key, v).is_some() {
                return Err(bad("duplicate key".into()));
            }
        }
        Ok(table)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{TABLE_MAGIC} {TABLE_VERSION} {}\n", self.dim);
        for ((video, frame, person, site), v) in &self.entries {
            out.push_str(&format!("{video} {frame} {person} {site}"));
            for x in v {
                out.push_str(&format!(" {x:?}"));
            }
            out.push('\n');
        }
        out
    }
}

impl EmbeddingProvider for EmbeddingTable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, q: &EmbeddingQuery) -> Result<Vec<f64>> {
        self.entries
            .get(&(q.video, q.frame, q.person, q.site))
            .cloned()
            .ok_or_else(|| q.missing())
    }
}

/// Class-conditioned vectors: a per-(class, site) mean scaled by
/// `strength` plus per-query Gaussian noise scaled by `noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticEmbeddings {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub seed: u64,
    pub strength: f64,
    pub noise: f64,
    pub classes: usize,
    /// Appearance class of each video.
    pub videos: BTreeMap<u64, usize>,
}

impl SyntheticEmbeddings {
    pub fn new(dim: usize, seed: u64, strength: f64, noise: f64, classes: usize) -> Self {
        SyntheticEmbeddings {
            format: SYNTHETIC_FORMAT.into(),
            version: SYNTHETIC_VERSION,
            dim,
            seed,
            strength,
            noise,
            classes,
            videos: BTreeMap::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let spec: SyntheticEmbeddings =
            serde_json::from_str(text).map_err(|e| Error::format("synthetic embedding", e.to_string()))?;
        if spec.format != SYNTHETIC_FORMAT || spec.version != SYNTHETIC_VERSION {
            return Err(Error::format(
                "synthetic embedding",
                format!("unsupported format {:?} version {}", spec.format, spec.version),
            ));
        }
        let sane = spec.dim > 0
            && spec.classes > 0
            && spec.strength.is_finite()
            && spec.noise.is_finite()
            && spec.noise >= 0.0
            && spec.videos.values().all(|&c| c < spec.classes);
        if !sane {
            return Err(Error::format("synthetic embedding", "inconsistent parameters"));
        }
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes")
    }

    fn class_mean(&self, class: usize, site: Site) -> Vec<f64> {
        normal_vector(mix(self.seed, &[1, class as u64, site.code()]), self.dim)
    }
}

impl EmbeddingProvider for SyntheticEmbeddings {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, q: &EmbeddingQuery) -> Result<Vec<f64>> {
        let class = *self.videos.get(&q.video).ok_or_else(|| q.missing())?;
        let mean = self.class_mean(class, q.site);
        let noise = normal_vector(mix(self.seed, &[2, q.video, q.frame, q.person, q.site.code()]), self.dim);
        Ok(mean
            .iter()
            .zip(&noise)
            .map(|(m, n)| self.strength * m + self.noise * n)
            .collect())
    }
}

/// Parses either provider file format, telling them apart by the first
/// non-blank character.
pub fn parse_provider(text: &str) -> Result<Arc<dyn EmbeddingProvider>> {
    if text.trim_start().starts_with('{') {
        Ok(Arc::new(SyntheticEmbeddings::parse(text)?))
    } else {
        Ok(Arc::new(EmbeddingTable::parse(text)?))
    }
}

pub fn load_provider(path: &Path) -> Result<Arc<dyn EmbeddingProvider>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_provider(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn query(video: u64, site: Site) -> EmbeddingQuery {
        EmbeddingQuery {
            video,
            frame: 4,
            person: 1,
            site,
            center: Point::new(10.0, 20.0),
            size: 32,
        }
    }

    #[test]
    fn site_text_form() {
        assert_eq!("body".parse::<Site>(), Ok(Site::Body));
        assert_eq!("13".parse::<Site>(), Ok(Site::Joint(13)));
        assert!("15".parse::<Site>().is_err());
        assert!("-1".parse::<Site>().is_err());
        assert_eq!(Site::Joint(7).to_string(), "7");
    }

    #[test]
    fn table_round_trip_is_exact() {
        let mut t = EmbeddingTable::new(3);
        t.insert(0, 1, 2, Site::Joint(4), vec![0.1, -1e-300, 1.0 / 3.0]).unwrap();
        t.insert(5, 0, 0, Site::Body, vec![f64::MAX, 2.5, -0.0]).unwrap();
        let text = t.to_text();
        assert!(text.starts_with("interact-embeddings 1 3\n"));
        let back = EmbeddingTable::parse(&text).unwrap();
        assert_eq!(back, t);
        let v = back.embed(&query(5, Site::Body).with_frame(0, 0)).unwrap();
        assert_eq!(v[0].to_bits(), f64::MAX.to_bits());
    }

    impl EmbeddingQuery {
        fn with_frame(mut self, frame: u64, person: u64) -> Self {
            self.frame = frame;
            self.person = person;
            self
        }
    }

    #[test]
    fn table_parse_errors_carry_lines() {
        let cases = [
            ("", "empty"),
            ("interact-embeddings 2 3\n", "version"),
            ("interact-embeddings 1 0\n", "dimension"),
            ("interact-embeddings 1 2\n0 0 0 body 1.0\n", "line 2"),
            ("interact-embeddings 1 1\n# c\n0 0 0 body 1.0\n0 0 0 body 2.0\n", "line 4"),
            ("interact-embeddings 1 1\n0 0 0 99 1.0\n", "site"),
            ("interact-embeddings 1 1\n0 0 0 body NaN\n", "bad value"),
        ];
        for (text, needle) in cases {
            let err = EmbeddingTable::parse(text).unwrap_err().to_string();
            assert!(err.contains(needle), "{text:?}: {err}");
        }
    }

    #[test]
    fn stub_is_deterministic_and_site_dependent() {
        let a = ProjectionStub::new(16, 9);
        let b = ProjectionStub::new(16, 9);
        let q = query(0, Site::Joint(4));
        assert_eq!(a.embed(&q).unwrap(), b.embed(&q).unwrap());
        assert_ne!(a.embed(&q).unwrap(), a.embed(&query(0, Site::Joint(7))).unwrap());
        assert_eq!(a.embed(&q).unwrap().len(), 16);
    }

    #[test]
    fn synthetic_signal_separates_classes() {
        let mut s = SyntheticEmbeddings::new(32, 3, 1.0, 0.1, 2);
        s.videos.insert(0, 0);
        s.videos.insert(1, 1);
        s.videos.insert(2, 0);
        let v0 = s.embed(&query(0, Site::Body)).unwrap();
        let v1 = s.embed(&query(1, Site::Body)).unwrap();
        let v2 = s.embed(&query(2, Site::Body)).unwrap();
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        assert!(d(&v0, &v2) < d(&v0, &v1));
        assert_eq!(v0, s.embed(&query(0, Site::Body)).unwrap());
        assert!(matches!(s.embed(&query(7, Site::Body)), Err(Error::MissingEmbedding { video: 7, .. })));

        let back = SyntheticEmbeddings::parse(&s.to_json()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn synthetic_rejects_bad_class() {
        let mut s = SyntheticEmbeddings::new(4, 3, 1.0, 0.1, 2);
        s.videos.insert(0, 2);
        assert!(SyntheticEmbeddings::parse(&s.to_json()).is_err());
    }

    #[test]
    fn provider_sniffing() {
        let s = SyntheticEmbeddings::new(4, 3, 1.0, 0.1, 2);
        assert_eq!(parse_provider(&s.to_json()).unwrap().dim(), 4);
        assert_eq!(parse_provider("interact-embeddings 1 6\n").unwrap().dim(), 6);
        assert!(parse_provider("garbage").is_err());
    }
}
