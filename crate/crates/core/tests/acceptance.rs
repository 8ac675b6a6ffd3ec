//! Acceptance suite. Prints one line per criterion and exits non-zero if
//! any criterion fails.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use interact::attention::{attention, part_distance, AttentionConfig, PartWeights};
use interact::cooccurrence::{kmeans_fit_traced, pair_score, Codebook, CoocConfig, CoocMatrix, SubVolume};
use interact::features::{inner_angles, outer_angles};
use interact::pipeline::{
    descriptors, evaluate, extract_features, fit_codebook, stratified_split, subset, synth_generate, train,
    Ablation, Checkpoint, Dataset, EvalReport, PipelineConfig, ProviderSet, SyntheticSpec,
};
use interact::sequence_model::{grad_check, InitConfig, InitDist, ModelDims, ModelParams, SegmentInput, SequenceSample};
use interact::skeleton::{
    interpolate_missing, EntityKind, Joint, JointState, Skeleton15, TrackedFrame, TrackedSequence, JOINTS,
};
use interact::Point;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let dims = ModelDims {
        input_dim: 16 + 29,
        descriptor_dim: 64,
        sub_hidden: 8,
        fusion_hidden: 16,
        persons: 2,
        classes: 4,
        share_sub: true,
    };
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    let (mut checked, mut floored) = (0, 0);
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let init = InitConfig {
            dist: InitDist::Uniform,
            scale: 0.3,
        };
        let params = ModelParams::init(dims, &init, &mut rng).unwrap();
        let mut v = |n: usize| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        let mut segments: Vec<Option<SegmentInput>> = (0..4)
            .map(|_| {
                Some(SegmentInput {
                    persons: vec![Some(v(dims.input_dim)), Some(v(dims.input_dim))],
                    descriptor: v(dims.descriptor_dim),
                })
            })
            .collect();
        segments[1].as_mut().unwrap().persons[1] = None;
        segments[3] = None;
        let sample = SequenceSample {
            segments,
            label: seed as usize % 4,
        };
        let r = grad_check(&params, &sample, 1e-5).unwrap();
        checked += r.checked;
        floored += r.floored;
        if r.max_rel_error >= worst {
            worst = r.max_rel_error;
            worst_at = format!(
                "{} (analytic {:.3e}, numeric {:.3e})",
                r.worst.map(|p| p.to_string()).unwrap_or_default(),
                r.worst_analytic,
                r.worst_numeric
            );
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-4 && secs < 60.0,
        format!("max relative error {worst:.2e} at {worst_at}, {checked} partials ({floored} below the denominator floor), {secs:.1} s"),
    )
}

fn attention_invariances() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let uncapped = AttentionConfig {
        cap: 1e12,
        ..AttentionConfig::default()
    };
    let default = AttentionConfig::default();
    let mut scale_failures = 0;
    let mut order_failures = 0;
    for _ in 0..1000 {
        let pw: [f64; 5] = std::array::from_fn(|_| rng.gen_range(1..=1u64 << 20) as f64 / 1024.0);
        let base = attention(&PartWeights::new(pw), &uncapped).unwrap();
        for c in [0.5, 3.0, 100.0] {
            let scaled = attention(&PartWeights::new(pw.map(|p| c * p)), &uncapped).unwrap();
            if scaled.lambda != base.lambda {
                scale_failures += 1;
            }
        }
        for cfg in [&uncapped, &default] {
            let l = attention(&PartWeights::new(pw), cfg).unwrap().lambda;
            for i in 0..5 {
                for j in 0..5 {
                    if pw[i] <= pw[j] && l[i] < l[j] {
                        order_failures += 1;
                    }
                }
            }
        }
    }
    let uniform = attention(&PartWeights::new([2.5; 5]), &default).unwrap();
    let uniform_err = uniform
        .lambda
        .iter()
        .map(|l| (l - 5.0 * default.scale).abs())
        .fold(0.0, f64::max);
    outcome(
        scale_failures == 0 && order_failures == 0 && uniform_err <= 1e-12,
        format!("{scale_failures} scale mismatches, {order_failures} ordering violations, uniform error {uniform_err:.1e}"),
    )
}

fn random_skeleton(rng: &mut ChaCha8Rng, id: u64) -> Skeleton15 {
    let pts: [Point; JOINTS] = std::array::from_fn(|_| Point::new(rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0)));
    let mut s = Skeleton15::from_points(pts, id);
    for j in 0..JOINTS {
        if rng.gen_bool(0.05) {
            s.joints[j] = Joint::MISSING;
        }
    }
    s
}

fn geometry_invariances() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut angle_dev, mut dist_dev) = (0.0f64, 0.0f64);
    for _ in 0..1000 {
        let a = random_skeleton(&mut rng, 0);
        let b = random_skeleton(&mut rng, 1);
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        let (sin, cos) = phi.sin_cos();
        let shift = Point::new(rng.gen_range(-500.0..500.0), rng.gen_range(-500.0..500.0));
        let scale = rng.gen_range(0.1..10.0);
        let rigid = |p: Point| Point::new(cos * p.x - sin * p.y, sin * p.x + cos * p.y) + shift;
        let similar = |p: Point| rigid(p) * scale;

        let moved = a.map_positions(similar);
        let (i0, i1) = (inner_angles(&a), inner_angles(&moved));
        let (o0, o1) = (outer_angles(&a), outer_angles(&moved));
        for (x, y) in i0.theta.iter().zip(&i1.theta).chain(o0.theta.iter().zip(&o1.theta)) {
            angle_dev = angle_dev.max((x - y).abs());
        }

        let d0 = part_distance(&a, &b);
        let d1 = part_distance(&a.map_positions(rigid), &b.map_positions(rigid));
        for p in 0..5 {
            if d0.present[p] != d1.present[p] {
                dist_dev = f64::INFINITY;
            }
            dist_dev = dist_dev.max((d0.d[p] - d1.d[p]).abs());
        }
    }
    outcome(
        angle_dev < 1e-9 && dist_dev < 1e-9,
        format!("max angle deviation {angle_dev:.1e}, max part-distance deviation {dist_dev:.1e}"),
    )
}

fn subvolume(f: Vec<f64>, center: (f64, f64), disp: (f64, f64), id: u64) -> SubVolume {
    SubVolume {
        f,
        dx: disp.0,
        dy: disp.1,
        cx: center.0,
        cy: center.1,
        k: 0,
        object_id: id,
        segment: 0,
    }
}

fn descriptor_checks() -> Outcome {
    let cfg = CoocConfig::default();
    let score_err = (pair_score(&[1.0, 2.0], &[1.0, 2.0], &[3.0], &[3.0], std::f64::consts::E) - 1.0).abs();

    // Two objects, words 0 and 1, offsets 3-4-5 from their centroids, one moving.
    let cb = Codebook {
        seed: 0,
        centroids: vec![vec![0.0, 0.0], vec![10.0, 0.0]],
    };
    let mut svs = vec![
        subvolume(vec![3.0, 4.0], (0.0, 0.0), (6.0, 8.0), 0),
        subvolume(vec![10.0, 5.0], (30.0, 40.0), (0.0, 0.0), 1),
    ];
    for sv in &mut svs {
        sv.quantize(&cb);
    }
    let mut m = CoocMatrix::new(2);
    m.update(&svs, &cb, &cfg).unwrap();
    // Object 0 carries all motion, r = dist = 50, and the log term is
    // ln((5 + 5) / 2 + e).
    let (motion, total, r, dist) = (10.0, 10.0, 50.0, 50.0);
    let summand = (motion / total) * (r / dist) * (5.0 + std::f64::consts::E).ln();
    let cell_err = (m.raw(0, 1) - summand).abs() + m.raw(1, 0).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let words = Codebook {
        seed: 0,
        centroids: (0..4).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect(),
    };
    let mut translate_dev = 0.0f64;
    for _ in 0..50 {
        let mut a = CoocMatrix::new(4);
        let mut b = CoocMatrix::new(4);
        let shift = (rng.gen_range(-300.0..300.0), rng.gen_range(-300.0..300.0));
        for seg in 0..3 {
            let mut svs: Vec<SubVolume> = (0..4)
                .map(|id| {
                    subvolume(
                        (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                        (rng.gen_range(0.0..640.0), rng.gen_range(0.0..480.0)),
                        (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)),
                        id,
                    )
                })
                .collect();
            for sv in &mut svs {
                sv.segment = seg;
                sv.quantize(&words);
            }
            let moved: Vec<SubVolume> = svs
                .iter()
                .map(|sv| SubVolume {
                    cx: sv.cx + shift.0,
                    cy: sv.cy + shift.1,
                    ..sv.clone()
                })
                .collect();
            a.update(&svs, &words, &cfg).unwrap();
            b.update(&moved, &words, &cfg).unwrap();
            for (x, y) in a.normalized().iter().zip(b.normalized()) {
                translate_dev = translate_dev.max((x - y).abs());
            }
        }
    }

    // The same through the full pipeline: shift every keypoint and box.
    let spec = SyntheticSpec {
        embedding_dim: 16,
        ..SyntheticSpec::default()
    };
    let set = synth_generate(&spec, 4, 0, 44).unwrap();
    let mut shifted = set.dataset.clone();
    for rec in &mut shifted.records {
        for f in &mut rec.frames {
            for d in &mut f.detections {
                d.bbox = d.bbox.translated(Point::new(37.5, -12.25));
                if let Some(pose) = &mut d.pose {
                    for k in &mut pose.joints {
                        k.pos = k.pos + Point::new(37.5, -12.25);
                    }
                }
            }
        }
    }
    let pcfg = PipelineConfig::desk();
    let providers = ProviderSet::new(Arc::new(set.embeddings.clone()));
    let feats = |ds: &Dataset| {
        ds.records
            .iter()
            .map(|r| extract_features(r, &pcfg, providers.for_record(r).unwrap().as_ref()).unwrap())
            .collect::<Vec<_>>()
    };
    let (fa, fb) = (feats(&set.dataset), feats(&shifted));
    let cb = fit_codebook(&fa, &pcfg).unwrap();
    for (x, y) in fa.iter().zip(&fb) {
        for (u, v) in descriptors(x, &cb, &pcfg).unwrap().iter().zip(descriptors(y, &cb, &pcfg).unwrap()) {
            for (p, q) in u.iter().zip(v) {
                translate_dev = translate_dev.max((p - q).abs());
            }
        }
    }

    outcome(
        score_err <= 1e-12 && cell_err <= 1e-12 && translate_dev < 1e-9,
        format!("pair score error {score_err:.1e}, single-pair cell error {cell_err:.1e}, translation deviation {translate_dev:.1e}"),
    )
}

fn kmeans_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut increases = 0;
    for ds in 0..10 {
        let dim = rng.gen_range(1..6);
        let n = rng.gen_range(20..200);
        let data: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.gen_range(-10.0..10.0)).collect()).collect();
        let fit = kmeans_fit_traced(&data, rng.gen_range(2..8), 100, ds).unwrap();
        increases += fit.sse_history.windows(2).filter(|w| w[1] > w[0]).count();
    }
    let toy = [
        vec![0.0, 0.0],
        vec![1.0, 0.0],
        vec![0.0, 1.0],
        vec![1.0, 1.0],
        vec![100.0, 100.0],
        vec![101.0, 100.0],
        vec![100.0, 101.0],
        vec![101.0, 101.0],
    ];
    let twins: Vec<Vec<f64>> = toy.iter().flat_map(|p| [p.clone(), p.clone()]).collect();
    let fit = kmeans_fit_traced(&[vec![0.0, 0.0], vec![0.0, 0.0], vec![9.0, 9.0], vec![9.0, 9.0]], 2, 50, 1).unwrap();
    let mut cents = fit.codebook.centroids.clone();
    cents.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let exact = cents == vec![vec![0.0, 0.0], vec![9.0, 9.0]] && *fit.sse_history.last().unwrap() == 0.0;
    let blobs = kmeans_fit_traced(&twins, 2, 50, 2).unwrap();
    let mut bc = blobs.codebook.centroids.clone();
    bc.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let blob_exact = bc == [vec![0.5, 0.5], vec![100.5, 100.5]];
    outcome(
        increases == 0 && exact && blob_exact,
        format!("{increases} SSE increases over 10 datasets, toy centroids exact: {}", exact && blob_exact),
    )
}

fn track_of(xs: &[Option<f64>]) -> TrackedSequence {
    TrackedSequence {
        person_id: 0,
        kind: EntityKind::Person,
        frame_rate: 25.0,
        frames: xs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let mut s = Skeleton15::missing(0);
                if let Some(x) = x {
                    s.joints[4] = Joint::observed(Point::new(*x, 2.0 * x));
                }
                TrackedFrame {
                    frame: i as u64,
                    skeleton: s,
                    bbox: None,
                }
            })
            .collect(),
    }
}

fn interpolation_checks() -> Outcome {
    let j = |t: &TrackedSequence, f: usize| t.frames[f].skeleton.joints[4];
    let one = interpolate_missing(&track_of(&[Some(0.0), None, Some(2.0)]), 10).unwrap();
    let one_ok = j(&one, 1).pos == Point::new(1.0, 2.0) && j(&one, 1).state == JointState::Interpolated;
    let two = interpolate_missing(&track_of(&[Some(0.0), None, None, Some(3.0)]), 10).unwrap();
    let two_ok = j(&two, 1).pos == Point::new(1.0, 2.0) && j(&two, 2).pos == Point::new(2.0, 4.0);
    let edge = interpolate_missing(&track_of(&[None, Some(1.0), Some(2.0), None]), 10).unwrap();
    let edge_ok = !j(&edge, 0).is_valid() && !j(&edge, 3).is_valid();
    outcome(
        one_ok && two_ok && edge_ok,
        format!("midpoint fill {one_ok}, two-frame fill {two_ok}, boundaries untouched {edge_ok}"),
    )
}

struct Synthetic {
    train: Dataset,
    test: Dataset,
    providers: ProviderSet,
}

fn synthetic(seed: u64) -> Synthetic {
    let spec = SyntheticSpec {
        embedding_dim: 16,
        ..SyntheticSpec::default()
    };
    let set = synth_generate(&spec, 280, 0, seed).unwrap();
    let labels: Vec<usize> = set.dataset.records.iter().map(|r| r.label.unwrap()).collect();
    let (train_idx, test_idx) = stratified_split(&labels, 80.0 / 280.0, seed).unwrap();
    Synthetic {
        train: subset(&set.dataset, &train_idx),
        test: subset(&set.dataset, &test_idx),
        providers: ProviderSet::new(Arc::new(set.embeddings)),
    }
}

fn run(data: &Synthetic, ablation: Ablation) -> (Checkpoint, EvalReport) {
    let cfg = PipelineConfig {
        ablation,
        ..PipelineConfig::desk()
    };
    let ckpt = train(&data.train, &cfg, &data.providers).unwrap();
    let report = evaluate(&ckpt, &data.test, &data.providers).unwrap();
    (ckpt, report)
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut record = |n: usize, name: &'static str, o: Outcome| {
        println!("[{}] {n} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, name, o));
    };
    record(1, "gradient oracle", gradient_oracle());
    record(2, "attention invariances", attention_invariances());
    record(3, "geometry invariances", geometry_invariances());
    record(4, "descriptor hand checks", descriptor_checks());
    record(5, "k-means", kmeans_checks());
    record(6, "interpolation", interpolation_checks());

    let start = Instant::now();
    let data = synthetic(7);
    let (ckpt, full) = run(&data, Ablation::Full);
    let secs = start.elapsed().as_secs_f64();
    let (_, again) = run(&data, Ablation::Full);
    let same = again == full && again.predictions.iter().zip(&full.predictions).all(|(a, b)| {
        a.probabilities.iter().zip(&b.probabilities).all(|(x, y)| x.to_bits() == y.to_bits())
    });
    record(
        7,
        "end-to-end synthetic",
        outcome(
            full.accuracy >= 0.9 && secs < 600.0 && same,
            format!(
                "test accuracy {:.4} on {} clips, {secs:.1} s per run, repeat run identical: {same}",
                full.accuracy, full.samples
            ),
        ),
    );

    let (_, b1) = run(&data, Ablation::Baseline1);
    let (_, b2) = run(&data, Ablation::Baseline2);
    record(
        8,
        "ablation ordering",
        outcome(
            full.accuracy >= b1.accuracy && full.accuracy >= b2.accuracy - 0.02,
            format!(
                "full {:.4}, baseline1 (joints only) {:.4}, baseline2 (descriptor only) {:.4}",
                full.accuracy, b1.accuracy, b2.accuracy
            ),
        ),
    );

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    ckpt.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    let replay = evaluate(&loaded, &data.test, &data.providers).unwrap();
    let identical = loaded == ckpt
        && replay == full
        && serde_json::to_string(&replay).unwrap() == serde_json::to_string(&full).unwrap();
    record(
        9,
        "checkpoint round trip",
        outcome(identical, format!("reloaded model reproduces the report bit for bit: {identical}")),
    );

    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    if failed.is_empty() {
        println!("all {} criteria passed", results.len());
    } else {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
