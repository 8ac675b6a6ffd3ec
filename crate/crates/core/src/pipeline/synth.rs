//! Synthetic two-person clips.
//!
//! Two standing skeletons face each other. In every class one or more
//! parts of the subject move toward a part of the other person and then
//! hold contact; with `mutual` both people reach for each other. A torso
//! part moves the whole body. Joints jitter every frame and drop out at a
//! configurable rate, and appearance vectors carry a weak class signal.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::format::{write_poses, Dataset, VideoRecord};
use crate::error::{Error, Result};
use crate::features::SyntheticEmbeddings;
use crate::geometry::Point;
use crate::skeleton::{BodyPart, Detection, DetectionBox, FrameDetections, Keypoint, RawPose18, RAW_JOINTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub name: String,
    /// Parts (numbered 1 to 5) of the subject that move.
    pub subject_parts: Vec<usize>,
    /// Part (1 to 5) of the other person they move toward.
    pub target_part: usize,
    /// Whether the other person's target part reaches back.
    #[serde(default)]
    pub mutual: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: Vec<ClassSpec>,
    /// Inclusive clip length range in frames.
    pub frames: [usize; 2],
    pub fps: f64,
    /// Fraction of the clip at which the approach starts.
    pub approach_start: [f64; 2],
    /// Fraction of the clip at which contact is reached.
    pub approach_end: [f64; 2],
    /// Hip-to-hip distance at unit scale before the approach.
    pub gap: [f64; 2],
    pub scale: [f64; 2],
    /// Mirror half of the clips horizontally.
    pub flip: bool,
    /// Per-frame joint noise standard deviation in pixels.
    pub jitter: f64,
    /// Probability that a keypoint is reported undetected.
    pub drop_rate: f64,
    pub embedding_dim: usize,
    pub signal_strength: f64,
    pub signal_noise: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let class = |name: &str, subject_parts: &[usize], target_part: usize, mutual: bool| ClassSpec {
            name: name.into(),
            subject_parts: subject_parts.to_vec(),
            target_part,
            mutual,
        };
        SyntheticSpec {
            classes: vec![
                class("shake", &[1], 1, true),
                class("kick", &[3], 5, false),
                class("hug", &[5], 5, true),
                class("push", &[1, 2], 5, false),
            ],
            frames: [40, 60],
            fps: 25.0,
            approach_start: [0.0, 0.25],
            approach_end: [0.55, 0.8],
            gap: [110.0, 140.0],
            scale: [0.85, 1.15],
            flip: true,
            jitter: 12.0,
            drop_rate: 0.1,
            embedding_dim: 64,
            signal_strength: 0.5,
            signal_noise: 1.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::InvalidArgument(m));
        if self.classes.len() < 2 {
            return err(format!("need at least 2 classes, got {}", self.classes.len()));
        }
        for c in &self.classes {
            let parts_ok = !c.subject_parts.is_empty()
                && c.subject_parts.iter().chain([&c.target_part]).all(|p| (1..=5).contains(p));
            if !parts_ok {
                return err(format!("class {:?}: parts must be numbered 1 to 5", c.name));
            }
        }
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        let fractions = ordered(self.approach_start)
            && ordered(self.approach_end)
            && self.approach_start[0] >= 0.0
            && self.approach_start[1] < self.approach_end[0]
            && self.approach_end[1] <= 1.0;
        if !fractions {
            return err("approach fractions must satisfy 0 <= start < end <= 1".into());
        }
        if !(ordered(self.gap) && ordered(self.scale) && self.gap[0] > 0.0 && self.scale[0] > 0.0) {
            return err("gap and scale ranges must be positive and ordered".into());
        }
        if self.frames[0] == 0 || self.frames[0] > self.frames[1] || self.frames[1] > 100_000 {
            return err(format!("bad clip length range {:?}", self.frames));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) || !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return err("fps must be positive and jitter nonnegative".into());
        }
        if !(0.0..=1.0).contains(&self.drop_rate) {
            return err(format!("drop_rate {} outside [0, 1]", self.drop_rate));
        }
        if self.embedding_dim == 0 || !self.signal_strength.is_finite() || !(self.signal_noise >= 0.0 && self.signal_noise.is_finite()) {
            return err("embedding settings must be finite with a positive dimension".into());
        }
        Ok(())
    }

    pub fn class_names(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.name.clone()).collect()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SyntheticSpec = toml::from_str(text).map_err(|e| Error::format("synthetic spec", e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Generated clips and the appearance source they refer to.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    pub dataset: Dataset,
    pub embeddings: SyntheticEmbeddings,
}

pub const POSES_FILE: &str = "poses.ndjson";
pub const EMBEDDINGS_FILE: &str = "embeddings.json";

impl SyntheticSet {
    /// Writes the pose file and its embedding sidecar into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut ds = self.dataset.clone();
        for rec in &mut ds.records {
            rec.embeddings = Some(EMBEDDINGS_FILE.into());
        }
        let poses = dir.join(POSES_FILE);
        std::fs::write(&poses, write_poses(&ds)).map_err(|e| Error::io(&poses, e))?;
        let emb = dir.join(EMBEDDINGS_FILE);
        std::fs::write(&emb, self.embeddings.to_json()).map_err(|e| Error::io(&emb, e))
    }
}

// Standing pose for someone facing +x, hip center at the origin, y down.
// Order: the 18 detector keypoints.
const TEMPLATE: [(f64, f64); RAW_JOINTS] = [
    (6.0, -100.0),
    (0.0, -80.0),
    (14.0, -78.0),
    (20.0, -55.0),
    (24.0, -32.0),
    (-14.0, -78.0),
    (-18.0, -55.0),
    (-20.0, -32.0),
    (8.0, 0.0),
    (10.0, 35.0),
    (12.0, 70.0),
    (-8.0, 0.0),
    (-9.0, 35.0),
    (-10.0, 70.0),
    (9.0, -104.0),
    (3.0, -104.0),
    (8.0, -101.0),
    (-2.0, -101.0),
];

struct Body {
    joints: [Point; RAW_JOINTS],
}

impl Body {
    fn standing(hip: Point, facing: f64, scale: f64) -> Self {
        Body {
            joints: TEMPLATE.map(|(dx, dy)| Point::new(hip.x + facing * dx * scale, hip.y + dy * scale)),
        }
    }

    fn centroid(&self, part: BodyPart) -> Point {
        let j = part.joints();
        // Raw index 14 is an eye; the converted hip is the mean of both hips.
        let at = |i: usize| if i == 14 { (self.joints[8] + self.joints[11]) / 2.0 } else { self.joints[i] };
        (at(j[0]) + at(j[1]) + at(j[2])) / 3.0
    }

    fn translate(&mut self, by: Point) {
        for p in &mut self.joints {
            *p = *p + by;
        }
    }

    /// Moves the limb's end joint toward `target` by `u` and keeps the
    /// middle joint between root and end.
    fn reach(&mut self, part: BodyPart, target: Point, u: f64) {
        let [root, mid, end] = part.joints();
        let e = self.joints[end] + (target - self.joints[end]) * u;
        let m_goal = (self.joints[root] + e) / 2.0;
        self.joints[mid] = self.joints[mid] + (m_goal - self.joints[mid]) * u;
        self.joints[end] = e;
    }
}

fn smoothstep(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    x * x * (3.0 - 2.0 * x)
}

fn uniform<R: Rng>(rng: &mut R, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.gen_range(r[0]..=r[1])
    }
}

/// Positions of both people at progress `u` for one class.
fn pose_pair(class: &ClassSpec, a0: &Body, b0: &Body, u: f64, scale: f64) -> (Body, Body) {
    let mut a = Body { joints: a0.joints };
    let mut b = Body { joints: b0.joints };
    let target = BodyPart::ALL[class.target_part - 1];
    let torso_moves = class.subject_parts.contains(&5);
    if torso_moves {
        let hips = b.centroid(BodyPart::Torso).x - a.centroid(BodyPart::Torso).x;
        let travel = (hips.abs() - 40.0 * scale).max(0.0) * hips.signum() * u;
        if class.mutual {
            a.translate(Point::new(travel / 2.0, 0.0));
            b.translate(Point::new(-travel / 2.0, 0.0));
        } else {
            a.translate(Point::new(travel, 0.0));
        }
    }
    for &p in &class.subject_parts {
        let part = BodyPart::ALL[p - 1];
        if part == BodyPart::Torso {
            continue;
        }
        if class.mutual {
            let meet = (a0.centroid(part) + b0.centroid(target)) / 2.0;
            a.reach(part, meet, u);
            if target != BodyPart::Torso {
                b.reach(target, meet, u);
            }
        } else {
            let goal = b.centroid(target);
            let toward_a = if a.joints[1].x < goal.x { -6.0 } else { 6.0 };
            a.reach(part, goal + Point::new(toward_a * scale, 0.0), u);
        }
    }
    (a, b)
}

fn detection<R: Rng>(body: &Body, rng: &mut R, jitter: &Normal<f64>, drop_rate: f64, scale: f64) -> Result<Detection> {
    let noisy: Vec<Point> = body
        .joints
        .iter()
        .map(|p| Point::new(p.x + jitter.sample(rng), p.y + jitter.sample(rng)))
        .collect();
    let pad = 12.0 * scale;
    let (mut lo, mut hi) = (noisy[0], noisy[0]);
    for p in &noisy {
        lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let bbox = DetectionBox::new(lo.x - pad, lo.y - pad, hi.x - lo.x + 2.0 * pad, hi.y - lo.y + 2.0 * pad)?;
    let keypoints: Vec<Keypoint> = noisy
        .iter()
        .map(|p| if drop_rate > 0.0 && rng.gen_bool(drop_rate) { Keypoint::invalid() } else { Keypoint::new(p.x, p.y) })
        .collect();
    Ok(Detection {
        pose: Some(RawPose18::from_slice(&keypoints)?),
        bbox,
    })
}

/// Generates `count` clips, cycling through the classes. Video ids start
/// at `first_video`.
pub fn synth_generate(spec: &SyntheticSpec, count: usize, first_video: u64, seed: u64) -> Result<SyntheticSet> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, spec.jitter).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut embeddings = SyntheticEmbeddings::new(
        spec.embedding_dim,
        seed ^ 0x5_eed0_fe3b,
        spec.signal_strength,
        spec.signal_noise,
        spec.classes.len(),
    );
    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        let label = i % spec.classes.len();
        let class = &spec.classes[label];
        let video = first_video + i as u64;
        let n = rng.gen_range(spec.frames[0]..=spec.frames[1]);
        let scale = uniform(&mut rng, spec.scale);
        let gap = uniform(&mut rng, spec.gap) * scale;
        let start = uniform(&mut rng, spec.approach_start) * n as f64;
        let end = uniform(&mut rng, spec.approach_end) * n as f64;
        let origin = Point::new(rng.gen_range(120.0..260.0), rng.gen_range(200.0..280.0));
        let flip = spec.flip && rng.gen_bool(0.5);
        let a0 = Body::standing(origin, 1.0, scale);
        let b0 = Body::standing(origin + Point::new(gap, 0.0), -1.0, scale);
        let mirror_x = 2.0 * origin.x + gap;

        let mut frames = Vec::with_capacity(n);
        for f in 0..n {
            let u = smoothstep((f as f64 - start) / (end - start).max(1.0));
            let (mut a, mut b) = pose_pair(class, &a0, &b0, u, scale);
            if flip {
                for body in [&mut a, &mut b] {
                    for p in &mut body.joints {
                        p.x = mirror_x - p.x;
                    }
                }
            }
            let mut detections = vec![
                detection(&a, &mut rng, &jitter, spec.drop_rate, scale)?,
                detection(&b, &mut rng, &jitter, spec.drop_rate, scale)?,
            ];
            if rng.gen_bool(0.5) {
                detections.swap(0, 1);
            }
            frames.push(FrameDetections {
                frame: f as u64,
                detections,
            });
        }
        embeddings.videos.insert(video, label);
        records.push(VideoRecord {
            video,
            frame_rate: spec.fps,
            label: Some(label),
            embeddings: None,
            frames,
            line: 0,
        });
    }
    Ok(SyntheticSet {
        dataset: Dataset {
            classes: spec.class_names(),
            records,
        },
        embeddings,
    })
}
