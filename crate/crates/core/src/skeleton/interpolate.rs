use super::{Joint, JointState, TrackedSequence, JOINTS};
use crate::error::{Error, Result};

/// Fills short joint dropouts by linear interpolation.
///
/// For each joint, a run of missing frames bounded on both sides by observed
/// frames is filled when the run spans at most `l_max` frames. The value at
/// fraction `s` of the gap is `(1 - s) * start + s * end`. Runs touching the
/// start or end of the sequence, and longer runs, stay missing. Only joints
/// that were valid on input serve as anchors.
pub fn interpolate_missing(seq: &TrackedSequence, l_max: usize) -> Result<TrackedSequence> {
    if l_max == 0 {
        return Err(Error::InvalidArgument("l_max must be at least 1".into()));
    }
    let mut out = seq.clone();
    for joint in 0..JOINTS {
        let mut anchor: Option<usize> = None;
        for (i, f) in seq.frames.iter().enumerate() {
            if !f.skeleton.joints[joint].is_valid() {
                continue;
            }
            if let Some(a) = anchor {
                fill_gap(seq, &mut out, joint, a, i, l_max);
            }
            anchor = Some(i);
        }
    }
    Ok(out)
}

fn fill_gap(
    seq: &TrackedSequence,
    out: &mut TrackedSequence,
    joint: usize,
    start: usize,
    end: usize,
    l_max: usize,
) {
    if end == start + 1 {
        return;
    }
    let f0 = seq.frames[start].frame;
    let f1 = seq.frames[end].frame;
    let span = f1 - f0;
    if span - 1 > l_max as u64 {
        return;
    }
    let a = seq.frames[start].skeleton.joints[joint].pos;
    let b = seq.frames[end].skeleton.joints[joint].pos;
    for f in &mut out.frames[start + 1..end] {
        let s = (f.frame - f0) as f64 / span as f64;
        f.skeleton.joints[joint] = Joint {
            pos: a * (1.0 - s) + b * s,
            state: JointState::Interpolated,
        };
    }
}
