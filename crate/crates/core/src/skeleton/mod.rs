//! Pose conversion, box filtering, gap repair and identity tracking.
//!
//! Raw pose estimates use the 18-joint OpenPose ordering. They are reduced to
//! 15 joints grouped into five body parts of three joints each:
//!
//! | part | joints |
//! |------|--------|
//! | 1 right arm | 2, 3, 4 |
//! | 2 left arm  | 5, 6, 7 |
//! | 3 right leg | 8, 9, 10 |
//! | 4 left leg  | 11, 12, 13 |
//! | 5 torso     | 0, 1, 14 |
//!
//! Joint 14 is a synthesized hip at the midpoint of the two raw hip joints.

mod interpolate;
mod track;

pub use interpolate::interpolate_missing;
pub use track::{box_overlap, track_people, Detection, FrameDetections, TrackerConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;

pub const RAW_JOINTS: usize = 18;
pub const JOINTS: usize = 15;
pub const PARTS: usize = 5;

/// Joint index of the synthesized hip.
pub const HIP: usize = 14;

/// Joint triples of parts 1..=5, stored zero-based by part.
pub const PART_JOINTS: [[usize; 3]; PARTS] = [
    [2, 3, 4],
    [5, 6, 7],
    [8, 9, 10],
    [11, 12, 13],
    [0, 1, 14],
];

/// Triples for the four angles between connected parts.
pub const OUTER_TRIPLES: [[usize; 3]; 4] = [[1, 2, 3], [1, 5, 6], [1, 8, 9], [1, 11, 12]];

/// Joints where contact is expected: head, both hands, both feet.
pub const CONTACT_JOINTS: [usize; PARTS] = [0, 4, 7, 10, 13];

// Raw indices of the face joints used when the raw head is missing.
const RAW_FACE: [usize; 4] = [14, 15, 16, 17];
const RAW_RIGHT_HIP: usize = 8;
const RAW_LEFT_HIP: usize = 11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BodyPart {
    RightArm,
    LeftArm,
    RightLeg,
    LeftLeg,
    Torso,
}

impl BodyPart {
    pub const ALL: [BodyPart; PARTS] = [
        BodyPart::RightArm,
        BodyPart::LeftArm,
        BodyPart::RightLeg,
        BodyPart::LeftLeg,
        BodyPart::Torso,
    ];

    /// Zero-based position in [`BodyPart::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    /// One-based part number (1 = right arm ... 5 = torso).
    pub fn number(self) -> usize {
        self.index() + 1
    }

    pub fn from_index(index: usize) -> Option<BodyPart> {
        BodyPart::ALL.get(index).copied()
    }

    pub fn joints(self) -> [usize; 3] {
        PART_JOINTS[self.index()]
    }

    /// The contact joint that belongs to this part.
    pub fn contact_joint(self) -> usize {
        match self {
            BodyPart::RightArm => 4,
            BodyPart::LeftArm => 7,
            BodyPart::RightLeg => 10,
            BodyPart::LeftLeg => 13,
            BodyPart::Torso => 0,
        }
    }

    /// The part a joint belongs to.
    pub fn of_joint(joint: usize) -> Option<BodyPart> {
        BodyPart::ALL
            .into_iter()
            .find(|p| p.joints().contains(&joint))
    }
}

/// One raw keypoint. Coordinates of an invalid keypoint are meaningless.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Keypoint {
    pub pos: Point,
    pub valid: bool,
}

impl Keypoint {
    pub fn new(x: f64, y: f64) -> Self {
        Keypoint {
            pos: Point::new(x, y),
            valid: true,
        }
    }

    pub fn invalid() -> Self {
        Keypoint::default()
    }

    fn position(&self) -> Option<Point> {
        self.valid.then_some(self.pos)
    }
}

/// Raw 18-joint pose estimate for one person in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPose18 {
    pub joints: [Keypoint; RAW_JOINTS],
}

impl RawPose18 {
    pub fn from_slice(joints: &[Keypoint]) -> Result<Self> {
        let joints: [Keypoint; RAW_JOINTS] = joints.try_into().map_err(|_| {
            Error::InvalidArgument(format!(
                "raw pose needs {RAW_JOINTS} joints, got {}",
                joints.len()
            ))
        })?;
        Ok(RawPose18 { joints })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JointState {
    Missing,
    Observed,
    /// Filled in from neighbouring frames.
    Interpolated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Joint {
    pub pos: Point,
    pub state: JointState,
}

impl Joint {
    pub const MISSING: Joint = Joint {
        pos: Point::ZERO,
        state: JointState::Missing,
    };

    pub fn observed(pos: Point) -> Self {
        Joint {
            pos,
            state: JointState::Observed,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.state != JointState::Missing
    }

    pub fn position(&self) -> Option<Point> {
        self.is_valid().then_some(self.pos)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    #[default]
    Person,
    /// A detected non-human object; represented by its box center at the hip.
    Object,
}

/// One tracked entity's 15 joints in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton15 {
    pub joints: [Joint; JOINTS],
    pub person_id: u64,
}

impl Skeleton15 {
    pub fn missing(person_id: u64) -> Self {
        Skeleton15 {
            joints: [Joint::MISSING; JOINTS],
            person_id,
        }
    }

    /// Builds a skeleton with every joint observed.
    pub fn from_points(points: [Point; JOINTS], person_id: u64) -> Self {
        Skeleton15 {
            joints: points.map(Joint::observed),
            person_id,
        }
    }

    /// An object stand-in: only the hip slot is set, to the box center.
    pub fn object(bbox: &DetectionBox, person_id: u64) -> Self {
        let mut skel = Skeleton15::missing(person_id);
        skel.joints[HIP] = Joint::observed(bbox.center());
        skel
    }

    pub fn position(&self, joint: usize) -> Option<Point> {
        self.joints[joint].position()
    }

    pub fn valid_count(&self) -> usize {
        self.joints.iter().filter(|j| j.is_valid()).count()
    }

    /// Applies `f` to every valid joint position.
    pub fn map_positions(&self, f: impl Fn(Point) -> Point) -> Self {
        let mut out = self.clone();
        for j in out.joints.iter_mut().filter(|j| j.is_valid()) {
            j.pos = f(j.pos);
        }
        out
    }
}

/// Axis-aligned detection box, top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionBox {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl DetectionBox {
    pub fn new(x: f64, y: f64, width: f64, height: f64) -> Result<Self> {
        let ok = [x, y, width, height].iter().all(|v| v.is_finite()) && width > 0.0 && height > 0.0;
        if !ok {
            return Err(Error::InvalidArgument(format!(
                "detection box [{x}, {y}, {width}, {height}] needs finite coordinates and positive size"
            )));
        }
        Ok(DetectionBox {
            x,
            y,
            width,
            height,
        })
    }

    pub fn center(&self) -> Point {
        Point::new(self.x + self.width / 2.0, self.y + self.height / 2.0)
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    /// Inclusive containment test.
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x && p.x <= self.x + self.width && p.y >= self.y && p.y <= self.y + self.height
    }

    pub fn translated(&self, by: Point) -> Self {
        DetectionBox {
            x: self.x + by.x,
            y: self.y + by.y,
            ..*self
        }
    }
}

/// Reduces an 18-joint estimate to the 15-joint layout.
///
/// Joints 0..=13 are copied. A missing raw head falls back to the mean of
/// the valid face joints (raw 14..=17). Joint 14 is the raw hip midpoint,
/// valid only when both raw hips are.
pub fn convert_pose(raw: &RawPose18, person_id: u64) -> Skeleton15 {
    let mut skel = Skeleton15::missing(person_id);
    for (dst, src) in skel.joints.iter_mut().zip(&raw.joints[..HIP]) {
        if let Some(p) = src.position() {
            *dst = Joint::observed(p);
        }
    }
    if !raw.joints[0].valid {
        if let Some(head) = Point::mean(RAW_FACE.iter().filter_map(|&i| raw.joints[i].position())) {
            skel.joints[0] = Joint::observed(head);
        }
    }
    if let (Some(r), Some(l)) = (
        raw.joints[RAW_RIGHT_HIP].position(),
        raw.joints[RAW_LEFT_HIP].position(),
    ) {
        skel.joints[HIP] = Joint::observed((r + l) / 2.0);
    }
    skel
}

/// Head-and-torso containment check against the detection box.
///
/// The head must be valid and inside; the remaining torso joints must be
/// inside when valid and are ignored when missing.
pub fn filter_by_box(skel: &Skeleton15, bbox: &DetectionBox) -> bool {
    let Some(head) = skel.position(0) else {
        return false;
    };
    bbox.contains(head)
        && BodyPart::Torso
            .joints()
            .iter()
            .filter_map(|&j| skel.position(j))
            .all(|p| bbox.contains(p))
}

/// Mean of the valid joints of `part`.
pub fn part_centroid(skel: &Skeleton15, part: BodyPart) -> Option<Point> {
    Point::mean(part.joints().iter().filter_map(|&j| skel.position(j)))
}

pub fn part_centroids(skel: &Skeleton15) -> [Option<Point>; PARTS] {
    BodyPart::ALL.map(|p| part_centroid(skel, p))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackedFrame {
    pub frame: u64,
    pub skeleton: Skeleton15,
    /// `None` for frames where the identity was not detected.
    pub bbox: Option<DetectionBox>,
}

/// All frames of one identity, from first to last detection.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedSequence {
    pub person_id: u64,
    pub kind: EntityKind,
    pub frame_rate: f64,
    pub frames: Vec<TrackedFrame>,
}

impl TrackedSequence {
    pub fn frame(&self, frame: u64) -> Option<&TrackedFrame> {
        self.frames
            .binary_search_by_key(&frame, |f| f.frame)
            .ok()
            .map(|i| &self.frames[i])
    }

    /// Marks every frame that fails [`filter_by_box`] as all-missing.
    /// Objects carry no head or torso and are left alone.
    pub fn apply_box_filter(&mut self) {
        if self.kind == EntityKind::Object {
            return;
        }
        for f in &mut self.frames {
            let keep = f.bbox.is_some_and(|b| filter_by_box(&f.skeleton, &b));
            if !keep {
                f.skeleton = Skeleton15::missing(self.person_id);
            }
        }
    }

    pub fn valid_joint_count(&self) -> usize {
        self.frames.iter().map(|f| f.skeleton.valid_count()).sum()
    }
}
