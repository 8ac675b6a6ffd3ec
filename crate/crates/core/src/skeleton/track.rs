use serde::{Deserialize, Serialize};

use super::{convert_pose, DetectionBox, EntityKind, RawPose18, Skeleton15, TrackedFrame, TrackedSequence};

/// One detection in a frame. A detection without a pose is an object.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub pose: Option<RawPose18>,
    pub bbox: DetectionBox,
}

impl Detection {
    pub fn kind(&self) -> EntityKind {
        if self.pose.is_some() {
            EntityKind::Person
        } else {
            EntityKind::Object
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetections {
    pub frame: u64,
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Minimum intersection-over-union for a match.
    pub iou_threshold: f64,
    /// Frames a track may go undetected and still be matched.
    pub max_missed: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            iou_threshold: 0.3,
            max_missed: 10,
        }
    }
}

/// Intersection area over union area.
pub fn box_overlap(a: &DetectionBox, b: &DetectionBox) -> f64 {
    let w = (a.x + a.width).min(b.x + b.width) - a.x.max(b.x);
    let h = (a.y + a.height).min(b.y + b.height) - a.y.max(b.y);
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let inter = w * h;
    inter / (a.area() + b.area() - inter)
}

struct Track {
    seq: TrackedSequence,
    last_box: DetectionBox,
    last_frame: u64,
}

/// Greedy frame-to-frame identity association.
///
/// Candidate (track, detection) pairs at or above the overlap threshold are
/// taken in order of decreasing overlap, then increasing track id, then
/// detection order. Unmatched detections open new identities numbered from
/// zero in order of appearance. People only match people and objects only
/// match objects. Frames must be in increasing order.
pub fn track_people(
    frames: &[FrameDetections],
    cfg: &TrackerConfig,
    frame_rate: f64,
) -> Vec<TrackedSequence> {
    let mut tracks: Vec<Track> = Vec::new();
    for fd in frames {
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for (ti, t) in tracks.iter().enumerate() {
            if fd.frame <= t.last_frame || fd.frame - t.last_frame > cfg.max_missed + 1 {
                continue;
            }
            for (di, d) in fd.detections.iter().enumerate() {
                if d.kind() != t.seq.kind {
                    continue;
                }
                let iou = box_overlap(&t.last_box, &d.bbox);
                if iou >= cfg.iou_threshold {
                    candidates.push((iou, ti, di));
                }
            }
        }
        // Track index order equals id order.
        candidates.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });

        let mut track_used = vec![false; tracks.len()];
        let mut assigned: Vec<Option<usize>> = vec![None; fd.detections.len()];
        for (_, ti, di) in candidates {
            if !track_used[ti] && assigned[di].is_none() {
                track_used[ti] = true;
                assigned[di] = Some(ti);
            }
        }

        for (di, d) in fd.detections.iter().enumerate() {
            let ti = match assigned[di] {
                Some(ti) => ti,
                None => {
                    let id = tracks.len() as u64;
                    tracks.push(Track {
                        seq: TrackedSequence {
                            person_id: id,
                            kind: d.kind(),
                            frame_rate,
                            frames: Vec::new(),
                        },
                        last_box: d.bbox,
                        last_frame: fd.frame,
                    });
                    tracks.len() - 1
                }
            };
            let t = &mut tracks[ti];
            let id = t.seq.person_id;
            if let Some(prev) = t.seq.frames.last().map(|f| f.frame) {
                for missed in prev + 1..fd.frame {
                    t.seq.frames.push(TrackedFrame {
                        frame: missed,
                        skeleton: Skeleton15::missing(id),
                        bbox: None,
                    });
                }
            }
            let skeleton = match &d.pose {
                Some(raw) => convert_pose(raw, id),
                None => Skeleton15::object(&d.bbox, id),
            };
            t.seq.frames.push(TrackedFrame {
                frame: fd.frame,
                skeleton,
                bbox: Some(d.bbox),
            });
            t.last_box = d.bbox;
            t.last_frame = fd.frame;
        }
    }
    tracks.into_iter().map(|t| t.seq).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{Keypoint, RAW_JOINTS};

    fn pose_at(x: f64, y: f64) -> RawPose18 {
        RawPose18 {
            joints: [Keypoint::new(x, y); RAW_JOINTS],
        }
    }

    fn person(x: f64, y: f64) -> Detection {
        Detection {
            pose: Some(pose_at(x + 5.0, y + 5.0)),
            bbox: DetectionBox::new(x, y, 10.0, 20.0).unwrap(),
        }
    }

    fn frames(boxes: &[Vec<(f64, f64)>]) -> Vec<FrameDetections> {
        boxes
            .iter()
            .enumerate()
            .map(|(f, dets)| FrameDetections {
                frame: f as u64,
                detections: dets.iter().map(|&(x, y)| person(x, y)).collect(),
            })
            .collect()
    }

    #[test]
    fn overlap_values() {
        let a = DetectionBox::new(0.0, 0.0, 2.0, 2.0).unwrap();
        let b = DetectionBox::new(1.0, 0.0, 2.0, 2.0).unwrap();
        assert!((box_overlap(&a, &b) - 2.0 / 6.0).abs() < 1e-15);
        assert_eq!(box_overlap(&a, &a), 1.0);
        let far = DetectionBox::new(5.0, 5.0, 1.0, 1.0).unwrap();
        assert_eq!(box_overlap(&a, &far), 0.0);
    }

    #[test]
    fn single_static_person_keeps_one_id() {
        let input = frames(&vec![vec![(0.0, 0.0)]; 5]);
        let out = track_people(&input, &TrackerConfig::default(), 30.0);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].person_id, 0);
        assert_eq!(out[0].frames.len(), 5);
    }

    #[test]
    fn disjoint_people_get_two_ids() {
        let input = frames(&vec![vec![(0.0, 0.0), (100.0, 0.0)]; 4]);
        let out = track_people(&input, &TrackerConfig::default(), 30.0);
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|s| s.frames.len() == 4));
        // Detection order flips in one frame; identities still follow the boxes.
        let mut swapped = input.clone();
        swapped[2].detections.reverse();
        let out = track_people(&swapped, &TrackerConfig::default(), 30.0);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].frames[2].bbox.unwrap().x, 0.0);
    }

    #[test]
    fn crossing_scene_matches_hand_run() {
        // Frame 1: A at 0 moves to 6, B at 12 moves to 6 (both overlap the
        // shared position). Overlap of A(0)->6 is 4/16 = 0.25 < 0.3 and B's is
        // the same, so neither matches: two new ids appear. Frame 2 both
        // stay, so ids 2 and 3 continue.
        let input = frames(&[
            vec![(0.0, 0.0), (12.0, 0.0)],
            vec![(6.0, 0.0), (6.0, 1.0)],
            vec![(6.0, 0.0), (6.0, 1.0)],
        ]);
        let out = track_people(&input, &TrackerConfig::default(), 30.0);
        let ids: Vec<(u64, usize)> = out.iter().map(|s| (s.person_id, s.frames.len())).collect();
        assert_eq!(ids, vec![(0, 1), (1, 1), (2, 2), (3, 2)]);
        assert_eq!(out, track_people(&input, &TrackerConfig::default(), 30.0));
    }

    #[test]
    fn tie_goes_to_lower_id() {
        // Two tracks at identical boxes; one detection in the next frame.
        let input = frames(&[vec![(0.0, 0.0), (0.0, 0.0)], vec![(0.0, 0.0)]]);
        let out = track_people(&input, &TrackerConfig::default(), 30.0);
        assert_eq!(out[0].frames.len(), 2);
        assert_eq!(out[1].frames.len(), 1);
    }

    #[test]
    fn short_miss_is_bridged_with_missing_frames() {
        let input = vec![
            FrameDetections { frame: 0, detections: vec![person(0.0, 0.0)] },
            FrameDetections { frame: 3, detections: vec![person(0.0, 0.0)] },
        ];
        let out = track_people(&input, &TrackerConfig::default(), 30.0);
        assert_eq!(out.len(), 1);
        let frames: Vec<u64> = out[0].frames.iter().map(|f| f.frame).collect();
        assert_eq!(frames, vec![0, 1, 2, 3]);
        assert!(out[0].frames[1].bbox.is_none());
        assert_eq!(out[0].frames[1].skeleton.valid_count(), 0);

        let cfg = TrackerConfig { max_missed: 1, ..Default::default() };
        assert_eq!(track_people(&input, &cfg, 30.0).len(), 2);
    }

    #[test]
    fn objects_do_not_match_people() {
        let bbox = DetectionBox::new(0.0, 0.0, 10.0, 20.0).unwrap();
        let input = vec![
            FrameDetections { frame: 0, detections: vec![Detection { pose: None, bbox }] },
            FrameDetections { frame: 1, detections: vec![person(0.0, 0.0)] },
        ];
        let out = track_people(&input, &TrackerConfig::default(), 30.0);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].kind, EntityKind::Object);
        assert_eq!(out[1].kind, EntityKind::Person);
    }
}
