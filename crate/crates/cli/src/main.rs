use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use interact::pipeline::{
    descriptors, evaluate, extract_features, fit_codebook, ingest, stratified_split, subset, synth_generate, train,
    write_poses, Ablation, Checkpoint, Dataset, PipelineConfig, ProviderSet, SyntheticSpec, EMBEDDINGS_FILE,
    POSES_FILE,
};
use interact::sequence_model::{grad_check_seeded, ModelDims};
use interact::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "interact", version, about = "Two-person interaction recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled synthetic pose set with its embedding sidecar.
    Synth(SynthArgs),
    /// Dump per-segment person features and descriptors as delimited text.
    Extract(ExtractArgs),
    /// Fit a model and write a checkpoint.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a labelled pose file.
    Eval(EvalArgs),
    /// Compare analytic gradients with central differences on random tiny models.
    Gradcheck(GradcheckArgs),
    /// Print attention traces and descriptor heat for one video.
    Inspect(InspectArgs),
}

/// Pipeline settings: a config file, then individual overrides.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML pipeline configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the small desk profile instead of the full-size defaults.
    #[arg(long, conflicts_with = "config")]
    desk: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    segment_length: Option<usize>,
    #[arg(long)]
    segments: Option<usize>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    /// Codebook size K.
    #[arg(long)]
    codewords: Option<usize>,
    #[arg(long)]
    sub_hidden: Option<usize>,
    #[arg(long)]
    fusion_hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// full, baseline1 (joints only) or baseline2 (descriptor only).
    #[arg(long)]
    ablation: Option<Ablation>,
}

impl ConfigArgs {
    fn resolve(&self) -> interact::Result<PipelineConfig> {
        let mut cfg = match (&self.config, self.desk) {
            (Some(path), _) => PipelineConfig::load(path)?,
            (None, true) => PipelineConfig::desk(),
            (None, false) => PipelineConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { cfg.$($field).+ = v; })*
            };
        }
        set! {
            seed => seed,
            segment_length => segment_length,
            segments => segments,
            embedding_dim => embedding_dim,
            codewords => cooccurrence.k,
            sub_hidden => model.sub_hidden,
            fusion_hidden => model.fusion_hidden,
            epochs => train.epochs,
            batch_size => train.batch_size,
            lr => optimizer.lr,
            ablation => ablation,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 280)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// TOML generator settings.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    /// Also write a stratified train.ndjson / test.ndjson split.
    #[arg(long)]
    test_fraction: Option<f64>,
}

#[derive(Args)]
struct ExtractArgs {
    /// Pose file.
    data: PathBuf,
    /// Take the configuration and codebook from a checkpoint.
    #[arg(long, conflicts_with = "config")]
    model: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

#[derive(Args)]
struct TrainArgs {
    /// Labelled pose file.
    data: PathBuf,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Labelled pose file.
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Fail unless this configuration produces the same features as the model's.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the confusion matrix here.
    #[arg(long)]
    confusion: Option<PathBuf>,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// Print one line per video.
    #[arg(long)]
    predictions: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 8)]
    sub_hidden: usize,
    #[arg(long, default_value_t = 16)]
    fusion_hidden: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 4)]
    segments: usize,
    #[arg(long, default_value_t = 45)]
    input_dim: usize,
    #[arg(long, default_value_t = 64)]
    descriptor_dim: usize,
}

#[derive(Args)]
struct InspectArgs {
    /// Pose file.
    data: PathBuf,
    #[arg(long)]
    video: u64,
    /// Take the configuration and codebook from a checkpoint.
    #[arg(long, conflicts_with = "config")]
    model: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

fn write_out(path: Option<&Path>, text: &str) -> interact::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| Error::Io {
            path: p.to_path_buf(),
            source: e,
        }),
        None => {
            emit(text);
            Ok(())
        }
    }
}

/// Writes to standard output, stopping quietly when the reader goes away.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    if let Err(e) = out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        if e.kind() != std::io::ErrorKind::BrokenPipe {
            log::error!("writing output: {e}");
        }
    }
}

fn synth(a: &SynthArgs) -> interact::Result<()> {
    let mut spec = match &a.spec {
        Some(p) => SyntheticSpec::from_toml(&std::fs::read_to_string(p).map_err(|e| Error::Io {
            path: p.clone(),
            source: e,
        })?)?,
        None => SyntheticSpec::default(),
    };
    if let Some(d) = a.embedding_dim {
        spec.embedding_dim = d;
    }
    let set = synth_generate(&spec, a.count, 0, a.seed)?;
    set.write(&a.out)?;
    if let Some(frac) = a.test_fraction {
        let labels: Vec<usize> = set.dataset.records.iter().filter_map(|r| r.label).collect();
        let (train_idx, test_idx) = stratified_split(&labels, frac, a.seed)?;
        for (name, idx) in [("train.ndjson", &train_idx), ("test.ndjson", &test_idx)] {
            let mut part = subset(&set.dataset, idx);
            for rec in &mut part.records {
                rec.embeddings = Some(EMBEDDINGS_FILE.into());
            }
            write_out(Some(&a.out.join(name)), &write_poses(&part))?;
        }
        log::info!("split {} train / {} test", train_idx.len(), test_idx.len());
    }
    println!("wrote {} clips to {}", a.count, a.out.join(POSES_FILE).display());
    Ok(())
}

/// Configuration, codebook and providers for feature dumps.
fn feature_context(
    data: &Dataset,
    model: Option<&Path>,
    cfg: &ConfigArgs,
) -> interact::Result<(PipelineConfig, interact::cooccurrence::Codebook, ProviderSet)> {
    if let Some(path) = model {
        let ckpt = Checkpoint::load(path)?;
        let providers = ProviderSet::with_stub(&ckpt.config);
        return Ok((ckpt.config, ckpt.codebook, providers));
    }
    let cfg = cfg.resolve()?;
    let providers = ProviderSet::with_stub(&cfg);
    let features = data
        .records
        .iter()
        .map(|r| extract_features(r, &cfg, providers.for_record(r)?.as_ref()))
        .collect::<interact::Result<Vec<_>>>()?;
    let cb = fit_codebook(&features, &cfg)?;
    Ok((cfg, cb, providers))
}

fn extract(a: &ExtractArgs) -> interact::Result<()> {
    let data = ingest(&a.data, None)?;
    let (cfg, cb, providers) = feature_context(&data, a.model.as_deref(), &a.cfg)?;
    let sep = a.delimiter;
    let mut out = format!("video{sep}segment{sep}first_frame{sep}stream{sep}values\n");
    for rec in &data.records {
        let f = extract_features(rec, &cfg, providers.for_record(rec)?.as_ref())?;
        let descs = descriptors(&f, &cb, &cfg)?;
        for (s, (seg, desc)) in f.segments.iter().zip(&descs).enumerate() {
            let mut row = |stream: &str, values: &[f64]| {
                let _ = write!(out, "{}{sep}{s}{sep}{}{sep}{stream}", rec.video, seg.first_frame);
                for v in values {
                    let _ = write!(out, "{sep}{v}");
                }
                out.push('\n');
            };
            for p in seg.persons.iter().flatten() {
                row(&format!("person{}", p.person_id), &p.cf);
            }
            row("descriptor", desc);
        }
    }
    write_out(a.out.as_deref(), &out)
}

fn train_cmd(a: &TrainArgs) -> interact::Result<()> {
    let cfg = a.cfg.resolve()?;
    let data = ingest(&a.data, None)?;
    let providers = ProviderSet::with_stub(&cfg);
    let ckpt = train(&data, &cfg, &providers)?;
    ckpt.save(&a.out)?;
    println!(
        "trained on {} videos, final loss {:.6}, wrote {}",
        data.records.len(),
        ckpt.epoch_losses.last().copied().unwrap_or(f64::NAN),
        a.out.display()
    );
    Ok(())
}

fn eval_cmd(a: &EvalArgs) -> interact::Result<()> {
    let ckpt = Checkpoint::load(&a.model)?;
    if let Some(path) = &a.config {
        let cfg = PipelineConfig::load(path)?;
        if cfg.feature_hash() != ckpt.config.feature_hash() {
            return Err(Error::ConfigMismatch(format!(
                "{} extracts features differently from the model's configuration",
                path.display()
            )));
        }
    }
    let data = ingest(&a.data, Some(&ckpt.classes))?;
    let providers = ProviderSet::with_stub(&ckpt.config);
    let report = evaluate(&ckpt, &data, &providers)?;
    let mut text = String::new();
    if a.predictions {
        for p in &report.predictions {
            let _ = writeln!(text, "{} {} -> {}", p.video, report.classes[p.label], report.classes[p.predicted]);
        }
    }
    text.push_str(&report.summary());
    emit(&text);
    if let Some(path) = &a.confusion {
        write_out(Some(path), &report.confusion_delimited(a.delimiter))?;
    }
    Ok(())
}

fn gradcheck(a: &GradcheckArgs) -> interact::Result<()> {
    let dims = ModelDims {
        input_dim: a.input_dim,
        descriptor_dim: a.descriptor_dim,
        sub_hidden: a.sub_hidden,
        fusion_hidden: a.fusion_hidden,
        persons: 2,
        classes: a.classes,
        share_sub: true,
    };
    let mut worst = 0.0f64;
    for seed in 0..a.seeds {
        let r = grad_check_seeded(dims, a.segments, seed, a.step)?;
        let at = r.worst.as_ref().map(|p| p.to_string()).unwrap_or_else(|| "-".into());
        println!("seed {seed}: max relative error {:.3e} at {at} over {} partials", r.max_rel_error, r.checked);
        worst = worst.max(r.max_rel_error);
    }
    if worst >= a.tolerance {
        return Err(Error::Numeric(format!("max relative error {worst:.3e} exceeds {:.1e}", a.tolerance)));
    }
    println!("ok: max relative error {worst:.3e} below {:.1e}", a.tolerance);
    Ok(())
}

fn inspect(a: &InspectArgs) -> interact::Result<()> {
    let data = ingest(&a.data, None)?;
    let rec = data
        .records
        .iter()
        .find(|r| r.video == a.video)
        .ok_or_else(|| Error::InvalidArgument(format!("video {} is not in {}", a.video, a.data.display())))?;
    let (cfg, cb, providers) = feature_context(&data, a.model.as_deref(), &a.cfg)?;
    let f = extract_features(rec, &cfg, providers.for_record(rec)?.as_ref())?;
    let sep = a.delimiter;
    let mut out = format!("# attention\nsegment{sep}first_frame{sep}person");
    for p in interact::skeleton::BodyPart::ALL {
        let _ = write!(out, "{sep}{p:?}");
    }
    let _ = writeln!(out, "{sep}active");
    for (s, seg) in f.segments.iter().enumerate() {
        for p in seg.persons.iter().flatten() {
            let _ = write!(out, "{s}{sep}{}{sep}{}", seg.first_frame, p.person_id);
            for l in p.lambda.lambda {
                let _ = write!(out, "{sep}{l}");
            }
            let _ = writeln!(out, "{sep}{:?}", p.active);
        }
    }
    let descs = descriptors(&f, &cb, &cfg)?;
    if let Some(last) = descs.last() {
        let k = cb.k();
        let _ = writeln!(out, "# descriptor heat ({k}x{k}, rows are codewords)");
        for row in last.chunks(k) {
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", cells.join(&sep.to_string()));
        }
    }
    emit(&out);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Extract(a) => extract(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Inspect(a) => inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
