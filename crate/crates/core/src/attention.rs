//! Interacting body-part attention.
//!
//! For a subject and its counterpart, each subject part gets a distance to
//! the counterpart; the per-segment change of that distance is the raw part
//! weight `pw`. The attention weight of part `p` is
//!
//! ```text
//! lambda_p = min(S * sum_q pw'_q / pw'_p, cap),   pw' = max(pw, eps)
//! ```
//!
//! in the default mode, or `5 S pw'_p / sum_q pw'_q` in proportional mode.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{PartVectors, PatchEmbedding};
use crate::geometry::Point;
use crate::skeleton::{part_centroids, BodyPart, Skeleton15, PARTS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionMode {
    /// Weight inversely proportional to the part's share of the change.
    #[default]
    AsWritten,
    /// Weight proportional to the part's share of the change.
    Proportional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    /// Attend to the closest other person by torso centroid.
    #[default]
    Nearest,
    /// Average the weights computed against every other person.
    AllPairsMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceAggregation {
    /// Distance to the closest part of the other person.
    #[default]
    Min,
    /// Mean distance over all present parts of the other person.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttentionConfig {
    #[serde(rename = "S")]
    pub scale: f64,
    pub eps: f64,
    pub cap: f64,
    pub mode: AttentionMode,
    pub pairing: Pairing,
    pub aggregation: DistanceAggregation,
}

impl Default for AttentionConfig {
    fn default() -> Self {
        AttentionConfig {
            scale: 1.0 / PARTS as f64,
            eps: 1e-6,
            cap: 5.0,
            mode: AttentionMode::AsWritten,
            pairing: Pairing::Nearest,
            aggregation: DistanceAggregation::Min,
        }
    }
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("S", self.scale), ("eps", self.eps), ("cap", self.cap)] {
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!("attention.{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Per-part distance from a subject to the other person, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartDistances {
    pub d: [f64; PARTS],
    pub present: [bool; PARTS],
}

impl PartDistances {
    pub const ABSENT: PartDistances = PartDistances {
        d: [0.0; PARTS],
        present: [false; PARTS],
    };
}

pub fn part_distance(subject: &Skeleton15, other: &Skeleton15) -> PartDistances {
    part_distance_with(subject, other, DistanceAggregation::Min)
}

pub fn part_distance_with(
    subject: &Skeleton15,
    other: &Skeleton15,
    aggregation: DistanceAggregation,
) -> PartDistances {
    let theirs: Vec<Point> = part_centroids(other).into_iter().flatten().collect();
    let mut out = PartDistances::ABSENT;
    if theirs.is_empty() {
        return out;
    }
    for (i, mine) in part_centroids(subject).into_iter().enumerate() {
        let Some(mine) = mine else { continue };
        let dists = theirs.iter().map(|&q| mine.distance(q));
        out.d[i] = match aggregation {
            DistanceAggregation::Min => dists.fold(f64::INFINITY, f64::min),
            DistanceAggregation::Mean => dists.sum::<f64>() / theirs.len() as f64,
        };
        out.present[i] = true;
    }
    out
}

/// Raw part weights `|d_cur - d_prev|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartWeights {
    pub pw: [f64; PARTS],
    pub present: [bool; PARTS],
}

impl PartWeights {
    pub fn new(pw: [f64; PARTS]) -> Self {
        PartWeights {
            pw,
            present: [true; PARTS],
        }
    }
}

pub fn part_weight_raw(d_cur: &PartDistances, d_prev: &PartDistances) -> PartWeights {
    let mut out = PartWeights {
        pw: [0.0; PARTS],
        present: [false; PARTS],
    };
    for i in 0..PARTS {
        if d_cur.present[i] && d_prev.present[i] {
            out.pw[i] = (d_cur.d[i] - d_prev.d[i]).abs();
            out.present[i] = true;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttentionWeights {
    pub lambda: [f64; PARTS],
    pub scale: f64,
    pub capped: [bool; PARTS],
}

impl AttentionWeights {
    /// The weights for parts that all moved alike.
    pub fn uniform(cfg: &AttentionConfig) -> Self {
        attention(&PartWeights::new([1.0; PARTS]), cfg).expect("validated config")
    }
}

pub fn attention(pw: &PartWeights, cfg: &AttentionConfig) -> Result<AttentionWeights> {
    cfg.validate()?;
    let floored: [f64; PARTS] =
        std::array::from_fn(|i| if pw.present[i] { pw.pw[i].max(cfg.eps) } else { cfg.eps });
    let total: f64 = floored.iter().sum();
    let mut out = AttentionWeights {
        lambda: [0.0; PARTS],
        scale: cfg.scale,
        capped: [false; PARTS],
    };
    for (i, &p) in floored.iter().enumerate() {
        let raw = match cfg.mode {
            AttentionMode::AsWritten => cfg.scale * (total / p),
            AttentionMode::Proportional => PARTS as f64 * cfg.scale * (p / total),
        };
        out.capped[i] = raw > cfg.cap;
        out.lambda[i] = raw.min(cfg.cap);
    }
    Ok(out)
}

/// Element-wise mean of several weight sets.
pub fn mean_attention(weights: &[AttentionWeights]) -> Option<AttentionWeights> {
    let first = weights.first()?;
    let mut out = AttentionWeights {
        lambda: [0.0; PARTS],
        scale: first.scale,
        capped: [false; PARTS],
    };
    for w in weights {
        for i in 0..PARTS {
            out.lambda[i] += w.lambda[i] / weights.len() as f64;
            out.capped[i] |= w.capped[i];
        }
    }
    Some(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedFeatures {
    pub velocity: PartVectors,
    pub acceleration: PartVectors,
    pub patches: PatchEmbedding,
}

/// Scales each part's motion, and each contact joint's patch vector, by the
/// weight of the part it belongs to.
pub fn apply_attention(
    lambda: &AttentionWeights,
    v: &PartVectors,
    a: &PartVectors,
    pf: &PatchEmbedding,
) -> WeightedFeatures {
    let mut velocity = *v;
    let mut acceleration = *a;
    let mut patches = pf.clone();
    for part in BodyPart::ALL {
        let w = lambda.lambda[part.index()];
        velocity.values[part.index()] = v.values[part.index()] * w;
        acceleration.values[part.index()] = a.values[part.index()] * w;
        for x in &mut patches.vectors[PatchEmbedding::slot(part)] {
            *x *= w;
        }
    }
    WeightedFeatures {
        velocity,
        acceleration,
        patches,
    }
}

/// Part with the largest weight, lowest index on ties.
pub fn most_active_part(lambda: &AttentionWeights) -> BodyPart {
    let mut best = 0;
    for i in 1..PARTS {
        if lambda.lambda[i] > lambda.lambda[best] {
            best = i;
        }
    }
    BodyPart::ALL[best]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::Joint;

    fn cfg() -> AttentionConfig {
        AttentionConfig::default()
    }

    fn all_parts_at(p: Point) -> Skeleton15 {
        Skeleton15::from_points([p; 15], 0)
    }

    #[test]
    fn single_distance() {
        let d = part_distance(&all_parts_at(Point::new(0.0, 0.0)), &all_parts_at(Point::new(3.0, 4.0)));
        assert_eq!(d.d, [5.0; PARTS]);
        assert_eq!(d.present, [true; PARTS]);
    }

    #[test]
    fn minimum_over_other_parts() {
        let mut other = Skeleton15::missing(1);
        for j in [2, 3, 4] {
            other.joints[j] = Joint::observed(Point::new(1.0, 0.0));
        }
        for j in [5, 6, 7] {
            other.joints[j] = Joint::observed(Point::new(10.0, 0.0));
        }
        let subject = all_parts_at(Point::ZERO);
        let d = part_distance(&subject, &other);
        assert_eq!(d.d[0], 1.0);
        let mean = part_distance_with(&subject, &other, DistanceAggregation::Mean);
        assert_eq!(mean.d[0], 5.5);
    }

    #[test]
    fn absent_other_gives_absent_distances() {
        let d = part_distance(&all_parts_at(Point::ZERO), &Skeleton15::missing(1));
        assert_eq!(d.present, [false; PARTS]);
    }

    #[test]
    fn raw_weight_cases() {
        let mut prev = PartDistances::ABSENT;
        let mut cur = PartDistances::ABSENT;
        prev.d[0] = 2.0;
        cur.d[0] = 3.5;
        prev.d[1] = 4.0;
        cur.d[1] = 4.0;
        prev.present[..2].copy_from_slice(&[true, true]);
        cur.present[..3].copy_from_slice(&[true, true, true]);
        let pw = part_weight_raw(&cur, &prev);
        assert_eq!(pw.pw[0], 1.5);
        assert_eq!(pw.pw[1], 0.0);
        assert_eq!((pw.pw[2], pw.present[2]), (0.0, false));
    }

    #[test]
    fn uniform_weights_are_five_s() {
        let w = attention(&PartWeights::new([1.0; PARTS]), &cfg()).unwrap();
        for l in w.lambda {
            assert!((l - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_evaluated_weights() {
        // sum = 6; 0.2 * 6/2 = 0.6; 0.2 * 6/1 = 1.2
        let w = attention(&PartWeights::new([2.0, 1.0, 1.0, 1.0, 1.0]), &cfg()).unwrap();
        let expected = [0.6, 1.2, 1.2, 1.2, 1.2];
        for (l, e) in w.lambda.iter().zip(expected) {
            assert!((l - e).abs() < 1e-12, "{l} vs {e}");
        }
        assert_eq!(most_active_part(&w), BodyPart::LeftArm);
    }

    #[test]
    fn epsilon_floor_then_cap() {
        // pw' = [1e-6, 1, 1, 1, 1]; sum = 4.000001; part 1 is capped at 5,
        // the others get 0.2 * 4.000001 = 0.8000002.
        let w = attention(&PartWeights::new([0.0, 1.0, 1.0, 1.0, 1.0]), &cfg()).unwrap();
        assert_eq!(w.lambda[0], 5.0);
        assert!(w.capped[0]);
        for l in &w.lambda[1..] {
            assert!((l - 0.8).abs() < 1e-6);
        }
        assert_eq!(most_active_part(&w), BodyPart::RightArm);
    }

    #[test]
    fn absent_parts_use_floor() {
        let mut pw = PartWeights::new([1.0; PARTS]);
        pw.present = [false; PARTS];
        let w = attention(&pw, &cfg()).unwrap();
        assert!(w.lambda.iter().all(|&l| (l - 1.0).abs() < 1e-12));
    }

    #[test]
    fn proportional_mode() {
        let c = AttentionConfig { mode: AttentionMode::Proportional, ..cfg() };
        let w = attention(&PartWeights::new([2.0, 1.0, 1.0, 1.0, 1.0]), &c).unwrap();
        // 5 * 0.2 * 2/6 = 1/3; the weights sum to 5S = 1.
        assert!((w.lambda[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((w.lambda.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(most_active_part(&w), BodyPart::RightArm);
    }

    #[test]
    fn invalid_config_rejected() {
        for c in [
            AttentionConfig { scale: 0.0, ..cfg() },
            AttentionConfig { eps: -1.0, ..cfg() },
            AttentionConfig { cap: f64::NAN, ..cfg() },
        ] {
            assert!(attention(&PartWeights::new([1.0; PARTS]), &c).is_err());
        }
    }

    #[test]
    fn apply_identity_and_scaling() {
        let mut v = PartVectors::ABSENT;
        v.values[0] = Point::new(1.0, 1.0);
        v.values[3] = Point::new(-2.0, 0.5);
        let a = v;
        let mut pf = PatchEmbedding::zeros(3);
        pf.vectors[1] = vec![1.0, 2.0, 3.0];
        pf.vectors[0] = vec![4.0, 5.0, 6.0];

        let ones = AttentionWeights { lambda: [1.0; PARTS], scale: 0.2, capped: [false; PARTS] };
        let same = apply_attention(&ones, &v, &a, &pf);
        assert_eq!((same.velocity, same.acceleration, &same.patches), (v, a, &pf));

        let focused = AttentionWeights { lambda: [2.0, 0.0, 0.0, 0.0, 0.0], ..ones };
        let out = apply_attention(&focused, &v, &a, &pf);
        assert_eq!(out.velocity.values[0], Point::new(2.0, 2.0));
        assert_eq!(out.velocity.values[3], Point::ZERO);
        assert_eq!(out.patches.vectors[0], vec![0.0; 3]);

        let partial = AttentionWeights { lambda: [0.6, 1.0, 1.0, 1.0, 1.0], ..ones };
        let out = apply_attention(&partial, &v, &a, &pf);
        assert_eq!(out.patches.vectors[1], vec![0.6 * 1.0, 0.6 * 2.0, 0.6 * 3.0]);
        assert_eq!(out.patches.vectors[0], pf.vectors[0]);
    }

    #[test]
    fn argmax_tie_breaks_low() {
        let w = |lambda| AttentionWeights { lambda, scale: 0.2, capped: [false; PARTS] };
        assert_eq!(most_active_part(&w([1.0; PARTS])), BodyPart::RightArm);
        assert_eq!(most_active_part(&w([5.0, 0.8, 0.8, 0.8, 0.8])), BodyPart::RightArm);
        assert_eq!(most_active_part(&w([0.6, 1.2, 1.2, 1.2, 1.2])), BodyPart::LeftArm);
    }

    #[test]
    fn mean_of_weights() {
        let a = AttentionWeights { lambda: [1.0, 2.0, 3.0, 4.0, 5.0], scale: 0.2, capped: [false; PARTS] };
        let b = AttentionWeights { lambda: [3.0, 2.0, 1.0, 0.0, 5.0], scale: 0.2, capped: [true, false, false, false, false] };
        let m = mean_attention(&[a, b]).unwrap();
        assert_eq!(m.lambda, [2.0, 2.0, 2.0, 2.0, 5.0]);
        assert!(m.capped[0]);
        assert!(mean_attention(&[]).is_none());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn inverse_ordering(pw in proptest::array::uniform5(0.0..50.0f64)) {
                let w = attention(&PartWeights::new(pw), &cfg()).unwrap();
                for i in 0..PARTS {
                    for j in 0..PARTS {
                        if pw[i] <= pw[j] {
                            prop_assert!(w.lambda[i] >= w.lambda[j]);
                        }
                    }
                }
            }

            #[test]
            fn argmax_scale_invariant(l in proptest::array::uniform5(0.0..10.0f64), c in proptest::sample::select(vec![0.25, 0.5, 2.0, 4.0, 1024.0])) {
                let a = AttentionWeights { lambda: l, scale: 0.2, capped: [false; PARTS] };
                let b = AttentionWeights { lambda: l.map(|x| x * c), ..a };
                prop_assert_eq!(most_active_part(&a), most_active_part(&b));
            }
        }
    }
}
