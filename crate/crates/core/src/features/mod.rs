//! Per-person motion, posture and joint-anchored appearance features.

pub mod embedding;

pub use embedding::{
    load_provider, parse_provider, EmbeddingProvider, EmbeddingQuery, EmbeddingTable, ProjectionStub, Site,
    SyntheticEmbeddings,
};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::skeleton::{BodyPart, Skeleton15, CONTACT_JOINTS, OUTER_TRIPLES, PARTS};

/// Vectors below this length make an angle degenerate.
pub const DEGENERATE_LENGTH: f64 = 1e-9;

/// One 2D vector per body part; absent parts hold zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PartVectors {
    pub values: [Point; PARTS],
    pub present: [bool; PARTS],
}

impl PartVectors {
    pub const ABSENT: PartVectors = PartVectors {
        values: [Point::ZERO; PARTS],
        present: [false; PARTS],
    };

    /// Flattened as `[x1, y1, ..., x5, y5]`.
    pub fn flatten(&self) -> [f64; 2 * PARTS] {
        let mut out = [0.0; 2 * PARTS];
        for (i, p) in self.values.iter().enumerate() {
            out[2 * i] = p.x;
            out[2 * i + 1] = p.y;
        }
        out
    }
}

/// Per-part mean displacement of the joints valid in both skeletons.
///
/// Both skeletons should belong to the same person.
pub fn velocity(prev: &Skeleton15, cur: &Skeleton15) -> PartVectors {
    let mut out = PartVectors::ABSENT;
    for part in BodyPart::ALL {
        let moved = part
            .joints()
            .into_iter()
            .filter_map(|j| Some(cur.position(j)? - prev.position(j)?));
        if let Some(v) = Point::mean(moved) {
            out.values[part.index()] = v;
            out.present[part.index()] = true;
        }
    }
    out
}

/// Per-part velocity difference; absent where either input is absent.
pub fn acceleration(v_prev: &PartVectors, v_cur: &PartVectors) -> PartVectors {
    let mut out = PartVectors::ABSENT;
    for i in 0..PARTS {
        if v_prev.present[i] && v_cur.present[i] {
            out.values[i] = v_cur.values[i] - v_prev.values[i];
            out.present[i] = true;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Angles<const N: usize> {
    /// Radians in `[0, pi]`; zero where degenerate.
    pub theta: [f64; N],
    /// Set when a joint is missing or a side has (near) zero length.
    pub degenerate: [bool; N],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostureFeature {
    pub inner: Angles<PARTS>,
    pub outer: Angles<4>,
}

/// Angle at `q1` between `a = q1 - q2` and `b = q1 - q3`.
///
/// Evaluated as `atan2(|a x b|, a . b)`, which equals
/// `arccos(a . b / (|a| |b|))` but keeps full precision near 0 and pi.
/// Returns `None` for missing joints or sides shorter than
/// [`DEGENERATE_LENGTH`].
pub fn joint_angle(q1: Option<Point>, q2: Option<Point>, q3: Option<Point>) -> Option<f64> {
    let (q1, q2, q3) = (q1?, q2?, q3?);
    // Halved differences cannot overflow for finite input.
    let a = q1 * 0.5 - q2 * 0.5;
    let b = q1 * 0.5 - q3 * 0.5;
    if 2.0 * a.norm() < DEGENERATE_LENGTH || 2.0 * b.norm() < DEGENERATE_LENGTH {
        return None;
    }
    let a = a / a.x.abs().max(a.y.abs());
    let b = b / b.x.abs().max(b.y.abs());
    let cross = a.x * b.y - a.y * b.x;
    Some(cross.abs().atan2(a.dot(b)))
}

fn angles_for<const N: usize>(skel: &Skeleton15, triples: &[[usize; 3]; N]) -> Angles<N> {
    let mut out = Angles {
        theta: [0.0; N],
        degenerate: [true; N],
    };
    for (i, t) in triples.iter().enumerate() {
        if let Some(theta) = joint_angle(skel.position(t[0]), skel.position(t[1]), skel.position(t[2]))
        {
            out.theta[i] = theta;
            out.degenerate[i] = false;
        }
    }
    out
}

/// Angle within each of the five parts.
pub fn inner_angles(skel: &Skeleton15) -> Angles<PARTS> {
    angles_for(skel, &BodyPart::ALL.map(|p| p.joints()))
}

/// Angles between the neck and each limb.
pub fn outer_angles(skel: &Skeleton15) -> Angles<4> {
    angles_for(skel, &OUTER_TRIPLES)
}

pub fn posture(skel: &Skeleton15) -> PostureFeature {
    PostureFeature {
        inner: inner_angles(skel),
        outer: outer_angles(skel),
    }
}

/// Appearance vectors at the five contact joints `[0, 4, 7, 10, 13]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchEmbedding {
    pub vectors: [Vec<f64>; PARTS],
    pub joint_valid: [bool; PARTS],
}

impl PatchEmbedding {
    pub fn zeros(dim: usize) -> Self {
        PatchEmbedding {
            vectors: std::array::from_fn(|_| vec![0.0; dim]),
            joint_valid: [false; PARTS],
        }
    }

    /// Slot of the contact joint of `part`.
    pub fn slot(part: BodyPart) -> usize {
        CONTACT_JOINTS
            .iter()
            .position(|&j| j == part.contact_joint())
            .expect("every part has a contact joint")
    }
}

/// Identifies where a patch query comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QueryContext {
    pub video: u64,
    pub frame: u64,
}

/// Queries `provider` for an `n x n` patch centered at each valid contact joint.
pub fn patch_embeddings(
    provider: &dyn EmbeddingProvider,
    skel: &Skeleton15,
    n: u32,
    ctx: QueryContext,
) -> Result<PatchEmbedding> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "patch size must be even and at least 2, got {n}"
        )));
    }
    let dim = provider.dim();
    let mut out = PatchEmbedding::zeros(dim);
    for (slot, &joint) in CONTACT_JOINTS.iter().enumerate() {
        let Some(center) = skel.position(joint) else {
            continue;
        };
        let v = provider.embed(&EmbeddingQuery {
            video: ctx.video,
            frame: ctx.frame,
            person: skel.person_id,
            site: Site::Joint(joint as u8),
            center,
            size: n,
        })?;
        if v.len() != dim {
            return Err(Error::Shape(format!(
                "provider returned {} values, expected {dim}",
                v.len()
            )));
        }
        out.vectors[slot] = v;
        out.joint_valid[slot] = true;
    }
    Ok(out)
}
