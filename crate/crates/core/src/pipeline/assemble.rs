//! Turns one video record into a model sample.
//!
//! The record is tracked, box-filtered and interpolated, then cut into
//! non-overlapping segments of `segment_length` frames (the last one may be
//! shorter). A segment's pose is the per-joint mean over its frames. Motion
//! and attention compare consecutive segment poses, so the first segment
//! has no velocity. Patches are queried at each segment's middle frame.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use super::config::{Ablation, PipelineConfig};
use super::format::VideoRecord;
use crate::attention::{
    apply_attention, attention, most_active_part, part_distance_with, part_weight_raw, AttentionWeights,
    PartDistances, PartWeights, Pairing,
};
use crate::cooccurrence::{build_subvolume, kmeans_fit, Codebook, CoocMatrix, SubVolume};
use crate::error::{Error, Result};
use crate::features::{
    acceleration, load_provider, patch_embeddings, posture, velocity, EmbeddingProvider, EmbeddingQuery,
    PartVectors, PatchEmbedding, ProjectionStub, QueryContext, Site,
};
use crate::geometry::Point;
use crate::sequence_model::{SegmentInput, SequenceSample};
use crate::skeleton::{
    interpolate_missing, part_centroid, track_people, BodyPart, EntityKind, Joint, Skeleton15, TrackedSequence,
    JOINTS, PARTS,
};

/// Resolves the appearance provider of each record, loading embedding
/// files once.
pub struct ProviderSet {
    fallback: Arc<dyn EmbeddingProvider>,
    loaded: Mutex<BTreeMap<PathBuf, Arc<dyn EmbeddingProvider>>>,
}

impl ProviderSet {
    pub fn new(fallback: Arc<dyn EmbeddingProvider>) -> Self {
        ProviderSet {
            fallback,
            loaded: Mutex::new(BTreeMap::new()),
        }
    }

    /// Falls back to a random projection of the configured dimension.
    pub fn with_stub(cfg: &PipelineConfig) -> Self {
        Self::new(Arc::new(ProjectionStub::new(cfg.embedding_dim, cfg.seed)))
    }

    pub fn for_record(&self, rec: &VideoRecord) -> Result<Arc<dyn EmbeddingProvider>> {
        let Some(path) = &rec.embeddings else {
            return Ok(self.fallback.clone());
        };
        let mut loaded = self.loaded.lock().expect("provider cache lock");
        if let Some(p) = loaded.get(path) {
            return Ok(p.clone());
        }
        let p = load_provider(path)?;
        loaded.insert(path.clone(), p.clone());
        Ok(p)
    }
}

/// Tracks every entity of a record and repairs person tracks.
pub fn prepare_tracks(rec: &VideoRecord, cfg: &PipelineConfig) -> Result<Vec<TrackedSequence>> {
    track_people(&rec.frames, &cfg.tracker, rec.frame_rate)
        .into_iter()
        .map(|mut t| {
            if t.kind == EntityKind::Person {
                t.apply_box_filter();
                interpolate_missing(&t, cfg.max_gap)
            } else {
                Ok(t)
            }
        })
        .collect()
}

/// Picks up to `count` tracks: people with the most valid joints first
/// (ties to the lower id), then objects seen in the most frames.
pub fn select_participants(tracks: &[TrackedSequence], count: usize, video: u64) -> Result<Vec<usize>> {
    let mut people: Vec<(usize, usize)> = tracks
        .iter()
        .enumerate()
        .filter(|(_, t)| t.kind == EntityKind::Person)
        .map(|(i, t)| (i, t.valid_joint_count()))
        .filter(|&(_, n)| n > 0)
        .collect();
    if people.is_empty() {
        return Err(Error::NoPersons(video));
    }
    people.sort_by(|a, b| b.1.cmp(&a.1).then(tracks[a.0].person_id.cmp(&tracks[b.0].person_id)));
    let mut objects: Vec<(usize, usize)> = tracks
        .iter()
        .enumerate()
        .filter(|(_, t)| t.kind == EntityKind::Object)
        .map(|(i, t)| (i, t.frames.iter().filter(|f| f.bbox.is_some()).count()))
        .collect();
    objects.sort_by(|a, b| b.1.cmp(&a.1).then(tracks[a.0].person_id.cmp(&tracks[b.0].person_id)));
    Ok(people.into_iter().chain(objects).map(|(i, _)| i).take(count).collect())
}

/// Per-joint mean of a track's valid positions over `[start, end)`.
pub fn segment_pose(track: &TrackedSequence, start: u64, end: u64) -> Skeleton15 {
    let mut sums = [(Point::ZERO, 0usize); JOINTS];
    for f in track.frames.iter().filter(|f| (start..end).contains(&f.frame)) {
        for (j, acc) in sums.iter_mut().enumerate() {
            if let Some(p) = f.skeleton.position(j) {
                acc.0 = acc.0 + p;
                acc.1 += 1;
            }
        }
    }
    let mut out = Skeleton15::missing(track.person_id);
    for (j, (sum, n)) in sums.into_iter().enumerate() {
        if n > 0 {
            out.joints[j] = Joint::observed(sum / n as f64);
        }
    }
    out
}

/// One participant in one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonSegment {
    pub person_id: u64,
    /// `[wf, inner angles, outer angles, weighted velocity, weighted acceleration]`.
    pub cf: Vec<f64>,
    pub pw: PartWeights,
    pub lambda: AttentionWeights,
    pub active: BodyPart,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentFeatures {
    pub first_frame: u64,
    /// One slot per selected participant; `None` when absent from the segment.
    pub persons: Vec<Option<PersonSegment>>,
    /// Every tracked entity with a box in the segment, not yet quantized.
    pub subvolumes: Vec<SubVolume>,
}

/// Everything about a record that does not depend on the codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordFeatures {
    pub video: u64,
    pub label: Option<usize>,
    /// At most `cfg.segments` entries.
    pub segments: Vec<SegmentFeatures>,
}

fn body_center(s: &Skeleton15) -> Option<Point> {
    part_centroid(s, BodyPart::Torso).or_else(|| Point::mean((0..JOINTS).filter_map(|j| s.position(j))))
}

fn distances_to_others(me: usize, poses: &[Option<Skeleton15>], cfg: &PipelineConfig) -> PartDistances {
    let Some(mine) = &poses[me] else { return PartDistances::ABSENT };
    let others: Vec<&Skeleton15> = poses
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != me)
        .filter_map(|(_, p)| p.as_ref())
        .collect();
    let agg = cfg.attention.aggregation;
    match cfg.attention.pairing {
        Pairing::Nearest => {
            let here = body_center(mine);
            let nearest = others
                .iter()
                .filter_map(|o| Some((here?.distance(body_center(o)?), *o)))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            match nearest {
                Some((_, o)) => part_distance_with(mine, o, agg),
                None => PartDistances::ABSENT,
            }
        }
        Pairing::AllPairsMean => {
            let all: Vec<PartDistances> = others.iter().map(|o| part_distance_with(mine, o, agg)).collect();
            let mut out = PartDistances::ABSENT;
            for p in 0..PARTS {
                let vals: Vec<f64> = all.iter().filter(|d| d.present[p]).map(|d| d.d[p]).collect();
                if !vals.is_empty() {
                    out.d[p] = vals.iter().sum::<f64>() / vals.len() as f64;
                    out.present[p] = true;
                }
            }
            out
        }
    }
}

fn patches_for(
    provider: &dyn EmbeddingProvider,
    track: &TrackedSequence,
    pose: &Skeleton15,
    video: u64,
    (start, end): (u64, u64),
    cfg: &PipelineConfig,
) -> Result<PatchEmbedding> {
    if !cfg.per_frame_patches {
        let mid = start + (end - start - 1) / 2;
        let skel = track
            .frame(mid)
            .map(|f| &f.skeleton)
            .filter(|s| s.valid_count() > 0)
            .unwrap_or(pose);
        return patch_embeddings(provider, skel, cfg.patch_size, QueryContext { video, frame: mid });
    }
    let dim = provider.dim();
    let mut sum = PatchEmbedding::zeros(dim);
    let mut counts = [0usize; PARTS];
    for f in track.frames.iter().filter(|f| (start..end).contains(&f.frame)) {
        let pe = patch_embeddings(provider, &f.skeleton, cfg.patch_size, QueryContext { video, frame: f.frame })?;
        for slot in 0..PARTS {
            if pe.joint_valid[slot] {
                counts[slot] += 1;
                for (acc, v) in sum.vectors[slot].iter_mut().zip(&pe.vectors[slot]) {
                    *acc += v;
                }
            }
        }
    }
    for slot in 0..PARTS {
        if counts[slot] > 0 {
            sum.joint_valid[slot] = true;
            sum.vectors[slot].iter_mut().for_each(|v| *v /= counts[slot] as f64);
        }
    }
    Ok(sum)
}

fn subvolumes_for(
    provider: &dyn EmbeddingProvider,
    tracks: &[TrackedSequence],
    video: u64,
    (start, end): (u64, u64),
    segment: usize,
) -> Result<Vec<SubVolume>> {
    let mut out = Vec::new();
    for t in tracks {
        let mut vectors = Vec::new();
        let mut centers = Vec::new();
        for f in t.frames.iter().filter(|f| (start..end).contains(&f.frame)) {
            let Some(b) = f.bbox else { continue };
            let q = EmbeddingQuery {
                video,
                frame: f.frame,
                person: t.person_id,
                site: Site::Body,
                center: b.center(),
                size: b.width.max(b.height).round().clamp(1.0, u32::MAX as f64) as u32,
            };
            let v = provider.embed(&q)?;
            if v.len() != provider.dim() {
                return Err(Error::Shape(format!("provider returned {} values, expected {}", v.len(), provider.dim())));
            }
            vectors.push(v);
            centers.push(b.center());
        }
        if !vectors.is_empty() {
            out.push(build_subvolume(&vectors, &centers, t.person_id, segment)?);
        }
    }
    Ok(out)
}

/// Computes per-segment person features and unquantized sub-volumes.
pub fn extract_features(
    rec: &VideoRecord,
    cfg: &PipelineConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<RecordFeatures> {
    if provider.dim() != cfg.embedding_dim {
        return Err(Error::Shape(format!(
            "embedding provider for video {} yields {} values but embedding_dim is {}",
            rec.video,
            provider.dim(),
            cfg.embedding_dim
        )));
    }
    let (Some(first), Some(last)) = (rec.frames.first(), rec.frames.last()) else {
        return Err(Error::NoPersons(rec.video));
    };
    let (first, last) = (first.frame, last.frame);
    let tracks = prepare_tracks(rec, cfg)?;
    let chosen = select_participants(&tracks, cfg.persons, rec.video)?;
    let l = cfg.segment_length as u64;
    let total = (last - first) / l + 1;
    let count = total.min(cfg.segments as u64) as usize;

    let mut prev_pose: Vec<Option<Skeleton15>> = vec![None; cfg.persons];
    let mut prev_dist: Vec<PartDistances> = vec![PartDistances::ABSENT; cfg.persons];
    let mut prev_vel: Vec<Option<PartVectors>> = vec![None; cfg.persons];
    let mut segments = Vec::with_capacity(count);
    for s in 0..count {
        let start = first + s as u64 * l;
        let end = (start + l).min(last + 1);
        let mut poses: Vec<Option<Skeleton15>> = (0..cfg.persons)
            .map(|m| chosen.get(m).map(|&ti| segment_pose(&tracks[ti], start, end)))
            .collect();
        for p in poses.iter_mut() {
            if p.as_ref().is_some_and(|p| p.valid_count() == 0) {
                *p = None;
            }
        }
        let mut persons = Vec::with_capacity(cfg.persons);
        let mut dists = vec![PartDistances::ABSENT; cfg.persons];
        let mut vels: Vec<Option<PartVectors>> = vec![None; cfg.persons];
        for m in 0..cfg.persons {
            let Some(pose) = &poses[m] else {
                persons.push(None);
                continue;
            };
            let track = &tracks[chosen[m]];
            dists[m] = distances_to_others(m, &poses, cfg);
            let pw = part_weight_raw(&dists[m], &prev_dist[m]);
            let lambda = attention(&pw, &cfg.attention)?;
            let v = prev_pose[m].as_ref().map(|p| velocity(p, pose));
            let a = match (&prev_vel[m], &v) {
                (Some(vp), Some(vc)) => acceleration(vp, vc),
                _ => PartVectors::ABSENT,
            };
            vels[m] = v;
            let v = v.unwrap_or(PartVectors::ABSENT);
            let patches = patches_for(provider, track, pose, rec.video, (start, end), cfg)?;
            let weighted = apply_attention(&lambda, &v, &a, &patches);
            let active = most_active_part(&lambda);
            let angles = posture(pose);
            let mut cf = Vec::with_capacity(cfg.person_dim());
            cf.extend_from_slice(&weighted.patches.vectors[PatchEmbedding::slot(active)]);
            cf.extend_from_slice(&angles.inner.theta);
            cf.extend_from_slice(&angles.outer.theta);
            cf.extend_from_slice(&weighted.velocity.flatten());
            cf.extend_from_slice(&weighted.acceleration.flatten());
            persons.push(Some(PersonSegment {
                person_id: track.person_id,
                cf,
                pw,
                lambda,
                active,
            }));
        }
        let subvolumes = subvolumes_for(provider, &tracks, rec.video, (start, end), s)?;
        segments.push(SegmentFeatures {
            first_frame: start,
            persons,
            subvolumes,
        });
        prev_pose = poses;
        prev_dist = dists;
        prev_vel = vels;
    }
    Ok(RecordFeatures {
        video: rec.video,
        label: rec.label,
        segments,
    })
}

/// Fits the codebook on the sub-volumes of training records only.
pub fn fit_codebook(train: &[RecordFeatures], cfg: &PipelineConfig) -> Result<Codebook> {
    let samples: Vec<Vec<f64>> = train
        .iter()
        .flat_map(|r| r.segments.iter())
        .flat_map(|s| s.subvolumes.iter().map(|sv| sv.f.clone()))
        .collect();
    if samples.is_empty() {
        return Err(Error::TooFewSamples {
            needed: cfg.cooccurrence.k,
            got: 0,
        });
    }
    kmeans_fit(&samples, cfg.cooccurrence.k, cfg.cooccurrence.kmeans_max_iter, cfg.seed)
}

/// Normalized cumulative descriptor after each segment, flattened row-major.
pub fn descriptors(features: &RecordFeatures, cb: &Codebook, cfg: &PipelineConfig) -> Result<Vec<Vec<f64>>> {
    let mut m = CoocMatrix::new(cb.k());
    let mut out = Vec::with_capacity(features.segments.len());
    for seg in &features.segments {
        let mut svs = seg.subvolumes.clone();
        for sv in &mut svs {
            if sv.f.len() != cb.dim() {
                return Err(Error::Shape(format!(
                    "codebook expects {}-value vectors, sub-volume has {}",
                    cb.dim(),
                    sv.f.len()
                )));
            }
            sv.quantize(cb);
        }
        if svs.len() >= 2 {
            m.update(&svs, cb, &cfg.cooccurrence)?;
        }
        out.push(m.normalized());
    }
    Ok(out)
}

/// Builds the fixed-length model input, padding with masked segments.
pub fn to_sample(features: &RecordFeatures, cb: &Codebook, cfg: &PipelineConfig) -> Result<SequenceSample> {
    let label = features
        .label
        .ok_or_else(|| Error::InvalidArgument(format!("video {} has no label", features.video)))?;
    let descs = descriptors(features, cb, cfg)?;
    let mut segments: Vec<Option<SegmentInput>> = features
        .segments
        .iter()
        .zip(descs)
        .map(|(seg, descriptor)| {
            Some(SegmentInput {
                persons: seg.persons.iter().map(|p| p.as_ref().map(|p| p.cf.clone())).collect(),
                descriptor,
            })
        })
        .collect();
    segments.resize(cfg.segments, None);
    Ok(SequenceSample { segments, label })
}

pub fn assemble_sample(
    rec: &VideoRecord,
    cfg: &PipelineConfig,
    provider: &dyn EmbeddingProvider,
    cb: &Codebook,
) -> Result<SequenceSample> {
    to_sample(&extract_features(rec, cfg, provider)?, cb, cfg)
}

/// Per-dimension z-scores fitted on training samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaler {
    pub person_mean: Vec<f64>,
    pub person_std: Vec<f64>,
    pub descriptor_mean: Vec<f64>,
    pub descriptor_std: Vec<f64>,
}

fn moments(rows: &[&[f64]], dim: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; dim];
    let mut std = vec![1.0; dim];
    if rows.is_empty() {
        return (mean, std);
    }
    let n = rows.len() as f64;
    for r in rows {
        for (m, x) in mean.iter_mut().zip(r.iter()) {
            *m += x / n;
        }
    }
    for (d, s) in std.iter_mut().enumerate() {
        let var = rows.iter().map(|r| (r[d] - mean[d]).powi(2)).sum::<f64>() / n;
        *s = if var.sqrt() > 1e-9 { var.sqrt() } else { 1.0 };
    }
    (mean, std)
}

impl FeatureScaler {
    pub fn identity(person_dim: usize, descriptor_dim: usize) -> Self {
        FeatureScaler {
            person_mean: vec![0.0; person_dim],
            person_std: vec![1.0; person_dim],
            descriptor_mean: vec![0.0; descriptor_dim],
            descriptor_std: vec![1.0; descriptor_dim],
        }
    }

    /// Statistics over every real segment; masked persons are ignored.
    pub fn fit(samples: &[SequenceSample], person_dim: usize, descriptor_dim: usize) -> Self {
        let segs: Vec<&SegmentInput> = samples.iter().flat_map(|s| s.segments.iter().flatten()).collect();
        let persons: Vec<&[f64]> = segs.iter().flat_map(|s| s.persons.iter().flatten().map(Vec::as_slice)).collect();
        let descs: Vec<&[f64]> = segs.iter().map(|s| s.descriptor.as_slice()).collect();
        let (person_mean, person_std) = moments(&persons, person_dim);
        let (descriptor_mean, descriptor_std) = moments(&descs, descriptor_dim);
        FeatureScaler {
            person_mean,
            person_std,
            descriptor_mean,
            descriptor_std,
        }
    }

    pub fn apply(&self, sample: &mut SequenceSample) {
        let z = |v: &mut Vec<f64>, mean: &[f64], std: &[f64]| {
            for ((x, m), s) in v.iter_mut().zip(mean).zip(std) {
                *x = (*x - m) / s;
            }
        };
        for seg in sample.segments.iter_mut().flatten() {
            for p in seg.persons.iter_mut().flatten() {
                z(p, &self.person_mean, &self.person_std);
            }
            z(&mut seg.descriptor, &self.descriptor_mean, &self.descriptor_std);
        }
    }
}

/// Zeroes the input streams an ablation leaves out.
pub fn apply_ablation(sample: &mut SequenceSample, ablation: Ablation) {
    for seg in sample.segments.iter_mut().flatten() {
        match ablation {
            Ablation::Full => {}
            Ablation::Baseline1 => seg.descriptor.fill(0.0),
            Ablation::Baseline2 => {
                for p in seg.persons.iter_mut().flatten() {
                    p.fill(0.0);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{Detection, DetectionBox, FrameDetections, Keypoint, RawPose18, RAW_JOINTS};

    fn standing(x: f64) -> RawPose18 {
        let offsets: [(f64, f64); RAW_JOINTS] = [
            (0.0, -100.0),
            (0.0, -80.0),
            (18.0, -78.0),
            (22.0, -55.0),
            (24.0, -32.0),
            (-18.0, -78.0),
            (-22.0, -55.0),
            (-24.0, -32.0),
            (10.0, 0.0),
            (11.0, 35.0),
            (12.0, 70.0),
            (-10.0, 0.0),
            (-11.0, 35.0),
            (-12.0, 70.0),
            (3.0, -104.0),
            (-3.0, -104.0),
            (6.0, -102.0),
            (-6.0, -102.0),
        ];
        RawPose18 {
            joints: offsets.map(|(dx, dy)| Keypoint::new(x + dx, 200.0 + dy)),
        }
    }

    fn person(x: f64) -> Detection {
        Detection {
            pose: Some(standing(x)),
            bbox: DetectionBox::new(x - 40.0, 90.0, 80.0, 190.0).unwrap(),
        }
    }

    fn still_clip(frames: u64) -> VideoRecord {
        VideoRecord {
            video: 7,
            frame_rate: 25.0,
            label: Some(1),
            embeddings: None,
            frames: (0..frames)
                .map(|f| FrameDetections {
                    frame: f,
                    detections: vec![person(100.0), person(300.0)],
                })
                .collect(),
            line: 1,
        }
    }

    fn approaching_clip(frames: u64) -> VideoRecord {
        let mut rec = still_clip(frames);
        for f in &mut rec.frames {
            f.detections[1] = person(300.0 - 3.0 * f.frame as f64);
        }
        rec
    }

    fn small_cfg() -> PipelineConfig {
        PipelineConfig {
            segment_length: 4,
            segments: 6,
            embedding_dim: 6,
            ..PipelineConfig::default()
        }
    }

    fn codebook(cfg: &PipelineConfig, rec: &VideoRecord, provider: &dyn EmbeddingProvider) -> Codebook {
        let f = extract_features(rec, cfg, provider).unwrap();
        let samples: Vec<Vec<f64>> = f.segments.iter().flat_map(|s| s.subvolumes.iter().map(|v| v.f.clone())).collect();
        kmeans_fit(&samples, 2, 50, 0).unwrap()
    }

    #[test]
    fn stationary_clip_has_uniform_attention() {
        let cfg = small_cfg();
        let provider = ProjectionStub::new(6, 1);
        let f = extract_features(&still_clip(24), &cfg, &provider).unwrap();
        assert_eq!(f.segments.len(), 6);
        for seg in &f.segments {
            for p in seg.persons.iter().flatten() {
                for l in p.lambda.lambda {
                    assert!((l - 5.0 * cfg.attention.scale).abs() < 1e-12);
                }
                assert_eq!(p.active, BodyPart::RightArm);
                assert_eq!(p.cf.len(), cfg.person_dim());
            }
            assert_eq!(seg.subvolumes.len(), 2);
        }
    }

    #[test]
    fn padding_and_truncation() {
        let cfg = small_cfg();
        let provider = ProjectionStub::new(6, 1);
        let full = still_clip(24);
        let cb = codebook(&cfg, &full, &provider);
        let s = assemble_sample(&full, &cfg, &provider, &cb).unwrap();
        assert_eq!(s.segments.len(), 6);
        assert_eq!(s.real_segments(), 6);
        let half = assemble_sample(&still_clip(12), &cfg, &provider, &cb).unwrap();
        assert_eq!(half.real_segments(), 3);
        assert!(half.segments[3..].iter().all(Option::is_none));
        let long = assemble_sample(&still_clip(40), &cfg, &provider, &cb).unwrap();
        assert_eq!(long.segments.len(), 6);
        assert_eq!(long.real_segments(), 6);
        let partial = assemble_sample(&still_clip(13), &cfg, &provider, &cb).unwrap();
        assert_eq!(partial.real_segments(), 4);
    }

    #[test]
    fn first_segment_has_no_motion() {
        let cfg = small_cfg();
        let provider = ProjectionStub::new(6, 1);
        let f = extract_features(&still_clip(8), &cfg, &provider).unwrap();
        let cf = &f.segments[0].persons[0].as_ref().unwrap().cf;
        assert!(cf[cfg.embedding_dim + 9..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn no_person_is_an_error() {
        let mut rec = still_clip(4);
        for f in &mut rec.frames {
            f.detections = vec![Detection {
                pose: None,
                bbox: DetectionBox::new(0.0, 0.0, 10.0, 10.0).unwrap(),
            }];
        }
        let provider = ProjectionStub::new(6, 1);
        assert!(matches!(extract_features(&rec, &small_cfg(), &provider), Err(Error::NoPersons(7))));
    }

    #[test]
    fn selection_prefers_complete_tracks() {
        let mut rec = still_clip(6);
        for f in rec.frames.iter_mut().skip(3) {
            f.detections.truncate(1);
        }
        rec.frames[0].detections.push(person(500.0));
        let tracks = prepare_tracks(&rec, &small_cfg()).unwrap();
        assert_eq!(tracks.len(), 3);
        assert_eq!(select_participants(&tracks, 2, 7).unwrap(), vec![0, 1]);
    }

    #[test]
    fn wrong_provider_dimension() {
        let provider = ProjectionStub::new(5, 1);
        assert!(matches!(extract_features(&still_clip(4), &small_cfg(), &provider), Err(Error::Shape(_))));
    }

    #[test]
    fn scaler_and_ablations() {
        let cfg = small_cfg();
        let provider = ProjectionStub::new(6, 1);
        let rec = approaching_clip(24);
        let cb = codebook(&cfg, &rec, &provider);
        let s = assemble_sample(&rec, &cfg, &provider, &cb).unwrap();
        let scaler = FeatureScaler::fit(std::slice::from_ref(&s), cfg.person_dim(), cb.k() * cb.k());
        let mut z = s.clone();
        scaler.apply(&mut z);
        let first: Vec<f64> = z.segments.iter().flatten().flat_map(|g| g.persons.iter().flatten().map(|p| p[0])).collect();
        assert!(first.iter().sum::<f64>().abs() < 1e-9);

        let nonzero = |s: &SequenceSample| -> usize {
            let seg = s.segments[2].as_ref().unwrap();
            seg.persons.iter().flatten().flatten().filter(|v| **v != 0.0).count()
                + seg.descriptor.iter().filter(|v| **v != 0.0).count()
        };
        let mut b1 = s.clone();
        apply_ablation(&mut b1, Ablation::Baseline1);
        let mut b2 = s.clone();
        apply_ablation(&mut b2, Ablation::Baseline2);
        assert!(nonzero(&s) > nonzero(&b1));
        assert!(nonzero(&s) > nonzero(&b2));
        assert!(b1.segments.iter().flatten().all(|g| g.descriptor.iter().all(|&v| v == 0.0)));
        assert!(b2.segments.iter().flatten().all(|g| g.persons.iter().flatten().flatten().all(|&v| v == 0.0)));
    }
}
