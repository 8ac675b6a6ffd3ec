//! Pose files.
//!
//! One JSON object per line. An optional first line declares the format and
//! the class vocabulary:
//!
//! ```text
//! {"format":"interact-poses","version":1,"classes":["shake","kick"]}
//! {"video":0,"frame":0,"label":"shake","fps":25,"persons":[{"keypoints":[[x,y,c],...],"box":[x,y,w,h]}]}
//! ```
//!
//! Each person carries 18 `[x, y, confidence]` triples; confidence 0 marks
//! an undetected joint. A detection without `keypoints` is an object.
//! `label`, `fps` and `embeddings` may appear on any line of a video and
//! must agree when repeated.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::{Detection, DetectionBox, FrameDetections, Keypoint, RawPose18, RAW_JOINTS};

pub const POSE_FORMAT: &str = "interact-poses";
pub const POSE_VERSION: u32 = 1;
pub const DEFAULT_FPS: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRecord {
    pub video: u64,
    pub frame_rate: f64,
    /// Index into the dataset's class list.
    pub label: Option<usize>,
    /// Appearance source for this video, if not the default provider.
    pub embeddings: Option<PathBuf>,
    /// Frames in increasing order.
    pub frames: Vec<FrameDetections>,
    /// Line where the video first appears.
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub classes: Vec<String>,
    pub records: Vec<VideoRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    format: String,
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    classes: Option<Vec<String>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameLine {
    video: u64,
    frame: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    embeddings: Option<String>,
    persons: Vec<PersonLine>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PersonLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    keypoints: Option<Vec<[f64; 3]>>,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

struct Partial {
    record: VideoRecord,
    label: Option<String>,
    fps: Option<f64>,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn detection(p: PersonLine, line: usize) -> Result<Detection> {
    let [x, y, w, h] = p.bbox;
    let bbox = DetectionBox::new(x, y, w, h).map_err(|e| parse_err(line, e.to_string()))?;
    let pose = match p.keypoints {
        None => None,
        Some(kps) => {
            if kps.len() != RAW_JOINTS {
                return Err(parse_err(line, format!("expected {RAW_JOINTS} keypoints, got {}", kps.len())));
            }
            let joints: Vec<Keypoint> = kps
                .iter()
                .map(|&[x, y, c]| {
                    if !(0.0..=1.0).contains(&c) {
                        return Err(parse_err(line, format!("keypoint confidence {c} outside [0, 1]")));
                    }
                    Ok(if c > 0.0 { Keypoint::new(x, y) } else { Keypoint::invalid() })
                })
                .collect::<Result<_>>()?;
            Some(RawPose18::from_slice(&joints).map_err(|e| parse_err(line, e.to_string()))?)
        }
    };
    Ok(Detection { pose, bbox })
}

/// Parses a pose file. Labels are resolved against `classes` when given,
/// else against the header's class list, else against the labels in order
/// of first appearance.
pub fn parse_poses(text: &str, classes: Option<&[String]>) -> Result<Dataset> {
    let mut vocab: Option<Vec<String>> = classes.map(<[String]>::to_vec);
    let fixed_vocab = vocab.is_some();
    let mut learned: Vec<String> = Vec::new();
    let mut order: Vec<u64> = Vec::new();
    let mut videos: HashMap<u64, Partial> = HashMap::new();
    let mut seen_content = false;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(trimmed).map_err(|e| parse_err(line, e.to_string()))?;
        if value.get("format").is_some() {
            if seen_content {
                return Err(parse_err(line, "header must be the first line"));
            }
            seen_content = true;
            let header: HeaderLine = serde_json::from_value(value).map_err(|e| parse_err(line, e.to_string()))?;
            if header.format != POSE_FORMAT || header.version != POSE_VERSION {
                return Err(parse_err(
                    line,
                    format!("unsupported format {:?} version {}", header.format, header.version),
                ));
            }
            if !fixed_vocab {
                vocab = header.classes;
            }
            continue;
        }
        seen_content = true;
        let fl: FrameLine = serde_json::from_value(value).map_err(|e| parse_err(line, e.to_string()))?;
        if let Some(fps) = fl.fps {
            if !(fps > 0.0) || !fps.is_finite() {
                return Err(parse_err(line, format!("frame rate {fps} must be positive")));
            }
        }
        let detections = fl
            .persons
            .into_iter()
            .map(|p| detection(p, line))
            .collect::<Result<Vec<_>>>()?;

        let entry = videos.entry(fl.video).or_insert_with(|| {
            order.push(fl.video);
            Partial {
                record: VideoRecord {
                    video: fl.video,
                    frame_rate: DEFAULT_FPS,
                    label: None,
                    embeddings: None,
                    frames: Vec::new(),
                    line,
                },
                label: None,
                fps: None,
            }
        });
        if let Some(label) = fl.label {
            match &entry.label {
                Some(prev) if *prev != label => {
                    return Err(parse_err(line, format!("video {} relabelled from {prev:?} to {label:?}", fl.video)));
                }
                _ => entry.label = Some(label),
            }
        }
        if let Some(fps) = fl.fps {
            match entry.fps {
                Some(prev) if prev != fps => {
                    return Err(parse_err(line, format!("video {} changes frame rate", fl.video)));
                }
                _ => entry.fps = Some(fps),
            }
        }
        if let Some(path) = fl.embeddings {
            let path = PathBuf::from(path);
            match &entry.record.embeddings {
                Some(prev) if *prev != path => {
                    return Err(parse_err(line, format!("video {} names two embedding files", fl.video)));
                }
                _ => entry.record.embeddings = Some(path),
            }
        }
        if entry.record.frames.iter().any(|f| f.frame == fl.frame) {
            return Err(parse_err(line, format!("video {} repeats frame {}", fl.video, fl.frame)));
        }
        entry.record.frames.push(FrameDetections {
            frame: fl.frame,
            detections,
        });
    }

    let mut records = Vec::with_capacity(order.len());
    for id in order {
        let mut p = videos.remove(&id).expect("every ordered id was inserted");
        p.record.frames.sort_by_key(|f| f.frame);
        p.record.frame_rate = p.fps.unwrap_or(DEFAULT_FPS);
        if let Some(label) = p.label {
            let index = match &vocab {
                Some(v) => v.iter().position(|c| *c == label).ok_or(Error::UnknownLabel {
                    line: p.record.line,
                    label: label.clone(),
                })?,
                None => match learned.iter().position(|c| *c == label) {
                    Some(i) => i,
                    None => {
                        learned.push(label);
                        learned.len() - 1
                    }
                },
            };
            p.record.label = Some(index);
        }
        records.push(p.record);
    }
    Ok(Dataset {
        classes: vocab.unwrap_or(learned),
        records,
    })
}

/// Reads a pose file. Relative embedding paths are resolved against the
/// file's directory.
pub fn ingest(path: &Path, classes: Option<&[String]>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut ds = parse_poses(&text, classes)?;
    if ds.records.is_empty() {
        log::warn!("{}: no pose records", path.display());
    }
    let base = path.parent().unwrap_or(Path::new(""));
    for rec in &mut ds.records {
        if let Some(p) = &rec.embeddings {
            if p.is_relative() {
                rec.embeddings = Some(base.join(p));
            }
        }
    }
    Ok(ds)
}

/// Serializes a dataset. The label, frame rate and embedding reference are
/// written on each video's first line.
pub fn write_poses(ds: &Dataset) -> String {
    let mut out = String::new();
    let header = HeaderLine {
        format: POSE_FORMAT.into(),
        version: POSE_VERSION,
        classes: Some(ds.classes.clone()),
    };
    out.push_str(&serde_json::to_string(&header).expect("header serializes"));
    out.push('\n');
    for rec in &ds.records {
        for (i, fd) in rec.frames.iter().enumerate() {
            let first = i == 0;
            let line = FrameLine {
                video: rec.video,
                frame: fd.frame,
                label: rec.label.filter(|_| first).map(|l| ds.classes[l].clone()),
                fps: first.then_some(rec.frame_rate),
                embeddings: rec
                    .embeddings
                    .as_ref()
                    .filter(|_| first)
                    .map(|p| p.to_string_lossy().into_owned()),
                persons: fd
                    .detections
                    .iter()
                    .map(|d| PersonLine {
                        keypoints: d.pose.as_ref().map(|pose| {
                            pose.joints
                                .iter()
                                .map(|k| if k.valid { [k.pos.x, k.pos.y, 1.0] } else { [0.0, 0.0, 0.0] })
                                .collect()
                        }),
                        bbox: [d.bbox.x, d.bbox.y, d.bbox.width, d.bbox.height],
                    })
                    .collect(),
            };
            let _ = writeln!(out, "{}", serde_json::to_string(&line).expect("frame serializes"));
        }
    }
    out
}
