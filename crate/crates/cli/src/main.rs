//! `deldet` — operator CLI for the delivery-detection pipeline.
//!
//! Subcommands cover the full artifact chain: `synth` builds a labeled
//! synthetic corpus, `propose` runs the motion engine over corpus videos,
//! `label` resolves proposals against ground-truth tracks, `train` fits the
//! clip classifier, `evaluate` scores a split into a metrics report, `flops`
//! prints the compute budget of the configured backbone, and `plot-pr`
//! renders overlaid precision-recall curves.
//!
//! Every command loads one [`Config`] (defaults, then `--config`, then the
//! `--seed`/`--deterministic` overrides) and writes a `run_<command>.json`
//! manifest next to its outputs. In deterministic mode reruns with the same
//! inputs produce byte-identical JSON artifacts.

mod plot;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use image::{Rgb, RgbImage};
use serde::Serialize;

use deldet_core::config::{ClipConfig, Config, Objective};
use deldet_core::data::{
    annotation_path, label_corpus, list_video_ids, make_splits, sample_clip, video_dir,
    videos_dir, EventDataset, Label, LabeledEvent, LabelsFile, Split, SplitsFile,
    VideoAnnotation, EVENTS_FILE, LABELS_FILE, SPLITS_FILE,
};
use deldet_core::eval::{
    evaluate_videos, uncertainty_cutoff, EventScore, MetricsReport, ScoredVideo,
};
use deldet_core::evidential::{dirichlet_output, softmax, EvidenceKind};
use deldet_core::geometry::BoxPx;
use deldet_core::imaging::{FrameDir, FrameSource};
use deldet_core::manifest::RunManifest;
use deldet_core::motion::{propose_events, EventsFile, VideoEvents};
use deldet_core::nn::backbone::{build_backbone, ArchSpec, MobileNet3dV2};
use deldet_core::nn::checkpoint::load_tensors;
use deldet_core::nn::flops::{count_flops, LayerCost};
use deldet_core::synth::build_corpus;
use deldet_core::train::{
    checkpoint_meta_path, fit, resolve_width, score_clips, CheckpointMeta, DatasetClips,
    BEST_CHECKPOINT, LAST_CHECKPOINT, TRAIN_LOG,
};
use deldet_core::{Error, Result};

const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");
/// Fallback output root when a command's `--out` flag is not given.
const OUT_ENV: &str = "DELDET_OUT";
/// Frame-score cap for `--baseline-maxpool`, matching the chunk length the
/// pooled per-frame baseline was designed around.
const MAXPOOL_FRAME_CAP: usize = 15;

#[derive(Parser)]
#[command(
    name = "deldet",
    version = CODE_VERSION,
    about = "Delivery detection pipeline: synthesize, propose, label, train, evaluate",
    after_help = "Exit codes: 0 ok; 2 usage/config; 3 decode; 4 missing artifact; \
                  5 single-class evaluation set; 1 other errors.\n\
                  Output roots default to the DELDET_OUT environment variable."
)]
struct Cli {
    /// Override the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Config file (TOML, or JSON by extension); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Force deterministic mode: manifests omit wall-clock fields.
    #[arg(long, global = true)]
    deterministic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled corpus (frames, annotations, splits).
    Synth {
        /// Corpus directory to create (or $DELDET_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the motion proposal engine over every corpus video.
    Propose {
        /// Corpus root containing videos/.
        #[arg(long)]
        data: PathBuf,
        /// Also write annotated preview frames under previews/.
        #[arg(long)]
        preview: bool,
    },
    /// Label proposals against annotated tracks and assemble splits.
    Label {
        /// Corpus root containing events.json and annotations/.
        #[arg(long)]
        data: PathBuf,
    },
    /// Train the clip classifier on the train split.
    Train {
        /// Corpus root containing labels.json and splits.json.
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint/log directory (or $DELDET_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from last.ckpt in the output directory.
        #[arg(long)]
        resume: bool,
        /// Stop after this many total epochs without changing any schedule.
        #[arg(long)]
        epoch_limit: Option<usize>,
    },
    /// Score a split and write metrics.json + pr_curve.csv.
    Evaluate {
        /// Corpus root containing labels.json and splits.json.
        #[arg(long)]
        data: PathBuf,
        /// Checkpoint file, or a training directory (uses best.ckpt).
        #[arg(long)]
        checkpoint: PathBuf,
        /// Report directory (or $DELDET_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Split to score: train, val, or test.
        #[arg(long, default_value = "test")]
        split: String,
        /// Abstention: "off", "auto" (mean uncertainty of validation
        /// mistakes), or a fixed cutoff in [0, 1].
        #[arg(long, default_value = "off")]
        uncertainty_filter: String,
        /// Score events by max-pooling repeated-frame clips at 1 fps instead
        /// of one spatiotemporal clip per event.
        #[arg(long)]
        baseline_maxpool: bool,
    },
    /// Print FLOPs, parameters, and size of the configured backbone.
    Flops {
        /// Directory for flops.json (defaults to the current directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Overlay precision-recall curves from metrics.json reports into a PNG.
    PlotPr {
        /// metrics.json reports, one curve each.
        #[arg(required = true)]
        metrics: Vec<PathBuf>,
        /// Output PNG path.
        #[arg(long, default_value = "pr_curve.png")]
        out: PathBuf,
    },
}

/// Loaded config plus where it came from, for manifest bookkeeping.
struct Ctx {
    cfg: Config,
    config_path: Option<PathBuf>,
}

impl Ctx {
    fn from_cli(cli: &Cli) -> Result<Ctx> {
        let mut cfg = match &cli.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        if cli.deterministic {
            cfg.deterministic = true;
        }
        Ok(Ctx { cfg, config_path: cli.config.clone() })
    }

    fn manifest(&self, command: &str) -> RunManifest {
        let mut m = RunManifest::begin(command, &self.cfg, CODE_VERSION);
        if let Some(path) = &self.config_path {
            m.input(path);
        }
        m
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidInput(_) => 2,
        Error::Decode(_) | Error::Image { .. } => 3,
        Error::MissingArtifact(_) => 4,
        Error::SingleClass(_) => 5,
        _ => 1,
    }
}

fn run(cli: &Cli) -> Result<()> {
    let ctx = Ctx::from_cli(cli)?;
    match &cli.command {
        Command::Synth { out } => cmd_synth(&ctx, out.clone()),
        Command::Propose { data, preview } => cmd_propose(&ctx, data, *preview),
        Command::Label { data } => cmd_label(&ctx, data),
        Command::Train { data, out, resume, epoch_limit } => {
            cmd_train(&ctx, data, out.clone(), *resume, *epoch_limit)
        }
        Command::Evaluate { data, checkpoint, out, split, uncertainty_filter, baseline_maxpool } => {
            cmd_evaluate(&ctx, data, checkpoint, out.clone(), split, uncertainty_filter, *baseline_maxpool)
        }
        Command::Flops { out } => cmd_flops(&ctx, out.clone()),
        Command::PlotPr { metrics, out } => cmd_plot_pr(&ctx, metrics, out),
    }
}

/// `--out` flag, then the `DELDET_OUT` environment variable.
fn resolve_out(flag: Option<PathBuf>) -> Result<PathBuf> {
    flag.or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from)).ok_or_else(|| {
        Error::Config(format!("no output directory: pass --out or set {OUT_ENV}"))
    })
}

fn cmd_synth(ctx: &Ctx, out: Option<PathBuf>) -> Result<()> {
    let root = resolve_out(out)?;
    fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
    let mut manifest = ctx.manifest("synth");
    let report = build_corpus(&ctx.cfg, &root)?;
    manifest
        .output(&root.join(deldet_core::data::CORPUS_MANIFEST_FILE))
        .output(&root.join(SPLITS_FILE))
        .output(&videos_dir(&root));
    manifest.finish(&root)?;
    println!(
        "wrote {} videos ({} delivery / {} non-delivery) across {} cameras to {}",
        report.total_videos,
        report.delivery_videos,
        report.non_delivery_videos,
        report.cameras,
        root.display()
    );
    Ok(())
}

/// Video ids are the subdirectory names under videos/, sorted.
fn frame_video_ids(root: &Path) -> Result<Vec<String>> {
    let dir = videos_dir(root);
    let entries = fs::read_dir(&dir).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            Error::MissingArtifact(format!("video directory {}", dir.display()))
        }
        _ => Error::io(&dir, e),
    })?;
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(&dir, e))?;
        if entry.path().is_dir() {
            ids.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    ids.sort();
    Ok(ids)
}

fn cmd_propose(ctx: &Ctx, root: &Path, preview: bool) -> Result<()> {
    let ids = frame_video_ids(root)?;
    if ids.is_empty() {
        return Err(Error::MissingArtifact(format!(
            "no videos under {}",
            videos_dir(root).display()
        )));
    }
    let mut manifest = ctx.manifest("propose");
    manifest.input(&videos_dir(root));
    let mut videos = Vec::with_capacity(ids.len());
    let mut total = 0usize;
    for id in &ids {
        let frames = FrameDir::open(video_dir(root, id))?;
        let mut ve = propose_events(&frames, &ctx.cfg.motion)?;
        ve.video_id = id.clone();
        total += ve.events.len();
        if preview {
            write_previews(root, &frames, &ve)?;
        }
        videos.push(ve);
    }
    let path = root.join(EVENTS_FILE);
    EventsFile::new(videos).save(&path)?;
    manifest.output(&path);
    manifest.finish(root)?;
    println!("proposed {} events across {} videos -> {}", total, ids.len(), path.display());
    Ok(())
}

/// Draw a 1-px outline of a half-open box, clamped to the image.
fn draw_box_outline(img: &mut RgbImage, b: &BoxPx, color: Rgb<u8>) {
    let (w, h) = (img.width(), img.height());
    let (x0, y0) = (b.x0.min(w.saturating_sub(1)), b.y0.min(h.saturating_sub(1)));
    let (x1, y1) = (b.x1.clamp(x0 + 1, w), b.y1.clamp(y0 + 1, h));
    for x in x0..x1 {
        img.put_pixel(x, y0, color);
        img.put_pixel(x, y1 - 1, color);
    }
    for y in y0..y1 {
        img.put_pixel(x0, y, color);
        img.put_pixel(x1 - 1, y, color);
    }
}

/// One preview per event: the middle frame with the event region (red) and
/// its thumbnail window (blue) outlined.
fn write_previews(root: &Path, frames: &FrameDir, ve: &VideoEvents) -> Result<()> {
    if ve.events.is_empty() {
        return Ok(());
    }
    let dir = root.join("previews");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    for ev in &ve.events {
        let mid = ev.start_frame + (ev.end_frame - ev.start_frame) / 2;
        let mut img = frames.frame(mid)?;
        draw_box_outline(&mut img, &ev.thumbnail, Rgb([40, 90, 220]));
        draw_box_outline(&mut img, &ev.roi, Rgb([220, 40, 40]));
        let path = dir.join(format!("{}_e{}.png", ve.video_id, ev.id));
        img.save(&path).map_err(|e| Error::image(&path, e))?;
    }
    Ok(())
}

fn cmd_label(ctx: &Ctx, root: &Path) -> Result<()> {
    let events_path = root.join(EVENTS_FILE);
    let events = EventsFile::load(&events_path)?;
    let mut manifest = ctx.manifest("label");
    manifest.input(&events_path).input(&deldet_core::data::annotations_dir(root));

    let mut labeled = Vec::new();
    let mut cameras = Vec::new();
    for ve in &events.videos {
        let ann = VideoAnnotation::load(&annotation_path(root, &ve.video_id))?;
        if !cameras.contains(&ann.camera_id) {
            cameras.push(ann.camera_id.clone());
        }
        labeled.extend(label_corpus(ve, &ann, &ctx.cfg.labeling)?);
    }
    let delivery = labeled.iter().filter(|e| e.label.is_delivery()).count();
    let total = labeled.len();
    let labels_path = root.join(LABELS_FILE);
    LabelsFile::new(labeled).save(&labels_path)?;
    manifest.output(&labels_path);

    // Assemble camera-disjoint splits unless the corpus already has them.
    let splits_path = root.join(SPLITS_FILE);
    if !splits_path.exists() {
        cameras.sort();
        let splits = make_splits(&cameras, &ctx.cfg.labeling.split_ratios, ctx.cfg.seed)?;
        splits.save(&splits_path)?;
        manifest.output(&splits_path);
    }
    manifest.finish(root)?;
    println!(
        "labeled {} events ({} delivery / {} non-delivery) -> {}",
        total,
        delivery,
        total - delivery,
        labels_path.display()
    );
    Ok(())
}

fn cmd_train(
    ctx: &Ctx,
    root: &Path,
    out: Option<PathBuf>,
    resume: bool,
    epoch_limit: Option<usize>,
) -> Result<()> {
    let out = resolve_out(out)?;
    let labels_path = root.join(LABELS_FILE);
    let splits_path = root.join(SPLITS_FILE);
    let labels = LabelsFile::load(&labels_path)?;
    let splits = SplitsFile::load(&splits_path)?;
    let train_ds = EventDataset::new(root, &labels, &splits, Split::Train)?;
    let val_ds = EventDataset::new(root, &labels, &splits, Split::Val)?;
    let train_clips = DatasetClips::new(&train_ds, ctx.cfg.clip.clone());
    let val_clips = DatasetClips::new(&val_ds, ctx.cfg.clip.clone());

    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut manifest = ctx.manifest("train");
    manifest.input(&labels_path).input(&splits_path);
    let result = fit(&ctx.cfg, &train_clips, &val_clips, &out, resume, epoch_limit)?;
    for name in [LAST_CHECKPOINT, "last.json", BEST_CHECKPOINT, "best.json", TRAIN_LOG] {
        manifest.output(&out.join(name));
    }
    manifest.finish(&out)?;
    match result.best_epoch {
        Some(epoch) => println!(
            "trained {} epochs ({} train / {} val events); best val F1 {:.4} at epoch {}",
            result.epochs_run,
            train_ds.items.len(),
            val_ds.items.len(),
            result.best_val_f1,
            epoch
        ),
        None => println!("trained {} epochs; no checkpoint beat F1 0", result.epochs_run),
    }
    Ok(())
}

/// Expected delivery probability and uncertainty from one raw head output.
fn head_score(raw: &[f64], objective: Objective, evidence: EvidenceKind) -> Result<(f64, f64)> {
    let delivery = Label::Delivery.class_index();
    match objective {
        Objective::Evidential => {
            let d = dirichlet_output(raw, evidence)?;
            Ok((d.probs[delivery], d.uncertainty))
        }
        Objective::CrossEntropy => {
            let probs = softmax(raw);
            let max = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            Ok((probs[delivery], 1.0 - max))
        }
    }
}

/// Frame-wise baseline scorer: sample event frames at 1 fps (capped), feed
/// each as a repeated-frame clip, and max-pool the per-frame delivery
/// probabilities. The event's uncertainty is the top frame's.
fn score_events_maxpool(
    model: &mut MobileNet3dV2<f32>,
    ds: &EventDataset,
    clip: &ClipConfig,
    objective: Objective,
    evidence: EvidenceKind,
) -> Result<Vec<EventScore>> {
    let mut out = Vec::with_capacity(ds.items.len());
    let mut cached: Option<(String, FrameDir, VideoAnnotation)> = None;
    for ev in &ds.items {
        if cached.as_ref().map(|(id, _, _)| id != &ev.video_id).unwrap_or(true) {
            let frames = ds.open_video(&ev.video_id)?;
            let ann = ds.annotation(&ev.video_id)?;
            cached = Some((ev.video_id.clone(), frames, ann));
        }
        let (_, frames, ann) = cached.as_ref().unwrap();
        let step = ann.fps.max(1);
        let mut best: Option<(f64, f64)> = None;
        for (i, frame) in (ev.start_frame..=ev.end_frame).step_by(step as usize).enumerate() {
            if i >= MAXPOOL_FRAME_CAP {
                break;
            }
            let single = LabeledEvent { start_frame: frame, end_frame: frame, ..ev.clone() };
            let sample = sample_clip(frames, Some(ann), &single, clip, false, None)?;
            let raw = model.forward(&sample.tensor, false, None, None)?;
            let raw64: Vec<f64> = raw.iter().map(|&v| v as f64).collect();
            let (p, u) = head_score(&raw64, objective, evidence)?;
            if best.map(|(bp, _)| p > bp).unwrap_or(true) {
                best = Some((p, u));
            }
        }
        let (p, u) = best.unwrap_or((0.0, 1.0));
        out.push(EventScore {
            video_id: ev.video_id.clone(),
            event_id: ev.event_id,
            actual: ev.label,
            p_delivery: p,
            uncertainty: u,
        });
    }
    Ok(out)
}

/// A restored checkpoint plus the scoring mode, reused across splits.
struct Scorer {
    model: MobileNet3dV2<f32>,
    clip: ClipConfig,
    objective: Objective,
    evidence: EvidenceKind,
    baseline: bool,
}

impl Scorer {
    fn score_split(
        &mut self,
        root: &Path,
        labels: &LabelsFile,
        splits: &SplitsFile,
        split: Split,
    ) -> Result<Vec<EventScore>> {
        let ds = EventDataset::new(root, labels, splits, split)?;
        if self.baseline {
            score_events_maxpool(&mut self.model, &ds, &self.clip, self.objective, self.evidence)
        } else {
            let clips = DatasetClips::new(&ds, self.clip.clone());
            score_clips(&mut self.model, &clips, self.objective, self.evidence)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    ctx: &Ctx,
    root: &Path,
    checkpoint: &Path,
    out: Option<PathBuf>,
    split: &str,
    filter: &str,
    baseline: bool,
) -> Result<()> {
    let out = resolve_out(out)?;
    let split: Split = split.parse()?;
    let ckpt_path =
        if checkpoint.is_dir() { checkpoint.join(BEST_CHECKPOINT) } else { checkpoint.to_path_buf() };
    let meta_path = checkpoint_meta_path(&ckpt_path);
    let meta = CheckpointMeta::load(&meta_path)?;

    let mut model = build_backbone::<f32>(
        &meta.arch,
        meta.width_mult,
        meta.num_classes,
        meta.dropout,
        meta.seed,
    )?;
    let tensors = load_tensors(&ckpt_path)?;
    // last.ckpt carries optimizer moments alongside the weights; drop them.
    let weights: Vec<_> =
        tensors.into_iter().filter(|(name, _)| !name.starts_with("adam.")).collect();
    model.load_state(&weights)?;

    let mut scorer = Scorer {
        model,
        // Score with the geometry the checkpoint was trained on.
        clip: ClipConfig { frames: meta.clip_frames, size: meta.clip_size, ..ctx.cfg.clip.clone() },
        objective: meta.objective,
        evidence: meta.evidence,
        baseline,
    };

    let labels_path = root.join(LABELS_FILE);
    let splits_path = root.join(SPLITS_FILE);
    let labels = LabelsFile::load(&labels_path)?;
    let splits = SplitsFile::load(&splits_path)?;

    let cutoff = match filter {
        "off" => None,
        "auto" => {
            let val = scorer.score_split(root, &labels, &splits, Split::Val)?;
            Some(uncertainty_cutoff(&val))
        }
        text => {
            let value: f64 = text.parse().map_err(|_| {
                Error::Config(format!(
                    "--uncertainty-filter must be off, auto, or a number in [0, 1]; got {text:?}"
                ))
            })?;
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Config(format!(
                    "--uncertainty-filter cutoff {value} outside [0, 1]"
                )));
            }
            Some(value)
        }
    };

    let scores = scorer.score_split(root, &labels, &splits, split)?;
    let mut by_video: BTreeMap<String, Vec<EventScore>> = BTreeMap::new();
    for s in scores {
        by_video.entry(s.video_id.clone()).or_default().push(s);
    }

    // Every video of the split is judged, including those without proposals.
    let mut videos = Vec::new();
    for id in list_video_ids(root)? {
        let ann = VideoAnnotation::load(&annotation_path(root, &id))?;
        if splits.split_of(&ann.camera_id) != Some(split) {
            continue;
        }
        videos.push(ScoredVideo {
            video_id: id.clone(),
            actual: ann.video_tag,
            events: by_video.remove(&id).unwrap_or_default(),
        });
    }

    let report = evaluate_videos(
        &videos,
        ctx.cfg.eval.video_threshold,
        cutoff,
        ctx.cfg.eval.avu_uncertainty_threshold,
    )?;

    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let metrics_path = out.join("metrics.json");
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(&metrics_path, text).map_err(|e| Error::io(&metrics_path, e))?;

    let csv_path = out.join("pr_curve.csv");
    let mut csv = String::from("threshold,precision,recall\n");
    for p in &report.pr_curve {
        csv.push_str(&format!("{},{},{}\n", p.threshold, p.precision, p.recall));
    }
    fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;

    let mut manifest = ctx.manifest("evaluate");
    manifest
        .input(&ckpt_path)
        .input(&meta_path)
        .input(&labels_path)
        .input(&splits_path)
        .output(&metrics_path)
        .output(&csv_path);
    manifest.finish(&out)?;

    println!(
        "split {}: {} videos, {} events{}",
        split.name(),
        report.outcomes.len(),
        report.event.total,
        if baseline { " (baseline max-pool)" } else { "" }
    );
    println!(
        "F1 {:.4}  mAP {:.4}  FPR {:.4}  accuracy {:.2}%  AvU {:.4}",
        report.f1, report.map, report.fpr, report.accuracy_pct, report.avu
    );
    match cutoff {
        Some(u) => println!(
            "abstained {} events, {} videos (uncertainty cutoff {:.4})",
            report.abstained_events, report.abstained_videos, u
        ),
        None => println!("abstention off"),
    }
    println!("wrote {} and {}", metrics_path.display(), csv_path.display());
    Ok(())
}

/// On-disk companion of the printed compute summary.
#[derive(Serialize)]
struct FlopsFile {
    arch: String,
    width_mult: f64,
    input_dims: [usize; 4],
    total_macs: u64,
    total_flops: u64,
    /// Conv/linear weights only, as counted by the FLOPs model.
    counted_params: u64,
    /// All trainable parameters, including normalization affines.
    model_params: u64,
    model_size_mb: f64,
    layers: Vec<LayerCost>,
}

fn cmd_flops(ctx: &Ctx, out: Option<PathBuf>) -> Result<()> {
    let out = out
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let cfg = &ctx.cfg;
    let width = resolve_width(cfg)?;
    let input = [3, cfg.clip.frames, cfg.clip.size, cfg.clip.size];
    let ops =
        ArchSpec::mobilenet_v2(width, cfg.model.num_classes, cfg.model.dropout).layer_ops();
    let report = count_flops(&ops, input)?;
    let mut model = build_backbone::<f32>(
        &cfg.model.arch,
        width,
        cfg.model.num_classes,
        cfg.model.dropout,
        cfg.seed,
    )?;
    let model_params = model.num_params() as u64;
    let model_size_mb = model_params as f64 * 4.0 / 1e6;

    println!("arch {}  width {}  input {:?}", cfg.model.arch, width, input);
    println!(
        "FLOPs {:.4} G  MACs {:.4} G  params {:.3} M ({:.3} M counted)  size {:.2} MB (f32)",
        report.total_flops as f64 / 1e9,
        report.total_macs as f64 / 1e9,
        model_params as f64 / 1e6,
        report.counted_params as f64 / 1e6,
        model_size_mb
    );

    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let path = out.join("flops.json");
    let file = FlopsFile {
        arch: cfg.model.arch.clone(),
        width_mult: width,
        input_dims: report.input_dims,
        total_macs: report.total_macs,
        total_flops: report.total_flops,
        counted_params: report.counted_params,
        model_params,
        model_size_mb,
        layers: report.layers,
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    let mut manifest = ctx.manifest("flops");
    manifest.output(&path);
    manifest.finish(&out)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_plot_pr(ctx: &Ctx, metrics: &[PathBuf], out: &Path) -> Result<()> {
    let mut manifest = ctx.manifest("plot-pr");
    let mut curves = Vec::new();
    for (i, path) in metrics.iter().enumerate() {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                Error::MissingArtifact(format!("metrics report {}", path.display()))
            }
            _ => Error::io(path, e),
        })?;
        let report: MetricsReport = serde_json::from_str(&text)
            .map_err(|e| Error::Decode(format!("{}: {e}", path.display())))?;
        let (color, color_name) = plot::PALETTE[i % plot::PALETTE.len()];
        println!("[{}] {}  {}  mAP {:.4}", i + 1, color_name, path.display(), report.map);
        curves.push(plot::Curve {
            points: report.pr_curve.iter().map(|p| (p.recall, p.precision)).collect(),
            color,
        });
        manifest.input(path);
    }
    let img = plot::render(&curves);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    img.save(out).map_err(|e| Error::image(out, e))?;
    manifest.output(out);
    let manifest_dir = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    manifest.finish(&manifest_dir)?;
    println!("wrote {}", out.display());
    Ok(())
}
