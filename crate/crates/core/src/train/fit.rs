//! The optimization loop: epoch-coupled schedules, per-batch updates,
//! validation scoring, checkpointing and bit-identical resume.
//!
//! Every stochastic choice (epoch shuffle, per-sample augmentation, per-
//! sample dropout) uses an RNG derived from `(seed, label, counter)` where
//! the counter is a pure function of the epoch and the sample's position in
//! it. No RNG state ever needs to be serialized: restarting from the last
//! checkpoint replays exactly the stream an uninterrupted run would have
//! consumed, so resumed training is bit-identical.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{Array1, Array3, ArrayD};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::{Config, Objective, TrainConfig, WidthMult};
use crate::data::{ClipSample, Label};
use crate::error::{Error, Result};
use crate::eval::{ConfusionCounts, EventScore};
use crate::evidential::{
    cross_entropy_loss_and_grad, dirichlet_output, evidential_loss_and_grad, lambda_schedule,
    rho_schedule, softmax, EvidenceKind, LossParams, LossTerms,
};
use crate::nn::backbone::{build_backbone, ArchSpec, ExcitationInputs, MobileNet3dV2};
use crate::nn::checkpoint::{load_tensors, save_tensors};
use crate::nn::excite::{build_mask, excite_alpha};
use crate::nn::flops::select_width;
use crate::rng::derived_rng;
use crate::train::optimizer::{clip_global_norm, AdamW};
use crate::train::source::ClipSource;

pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const CHECKPOINT_SCHEMA_VERSION: u32 = 1;

/// Learning rate for an epoch: linear warmup to the peak over
/// `warmup_epochs`, then multiplied by the decay factor at each decay epoch.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let mut lr = if epoch < cfg.warmup_epochs {
        cfg.peak_lr * (epoch + 1) as f64 / cfg.warmup_epochs as f64
    } else {
        cfg.peak_lr
    };
    for &d in &cfg.lr_decay_epochs {
        if epoch >= d {
            lr *= cfg.lr_decay_factor;
        }
    }
    lr
}

/// Resolve the configured width multiplier, running the FLOPs-budget
/// selection when it is `auto`.
pub fn resolve_width(cfg: &Config) -> Result<f64> {
    match cfg.model.width_mult {
        WidthMult::Fixed(w) => Ok(w),
        WidthMult::Auto => {
            let input = [3, cfg.clip.frames, cfg.clip.size, cfg.clip.size];
            let (w, _) = select_width(
                &cfg.model.width_candidates,
                cfg.model.flops_target_g,
                input,
                cfg.model.num_classes,
                |w| ArchSpec::mobilenet_v2(w, cfg.model.num_classes, cfg.model.dropout).layer_ops(),
            )?;
            Ok(w)
        }
    }
}

/// JSON sidecar describing a checkpoint: everything needed to rebuild the
/// exact model and continue (or evaluate) without guessing at settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub schema_version: u32,
    pub arch: String,
    pub width_mult: f64,
    pub num_classes: usize,
    pub dropout: f64,
    pub excite_layers: Vec<usize>,
    pub excitation: bool,
    pub clip_frames: usize,
    pub clip_size: usize,
    pub objective: Objective,
    pub evidence: EvidenceKind,
    /// Epochs fully trained; the next epoch to run on resume.
    pub epochs_completed: usize,
    /// The schedule horizon the run was configured for.
    pub total_epochs: usize,
    pub optimizer_step: u64,
    pub best_val_f1: f64,
    pub best_epoch: Option<usize>,
    pub config_hash: String,
    pub seed: u64,
}

impl CheckpointMeta {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<CheckpointMeta> {
        let text = fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingArtifact(format!(
                    "checkpoint metadata {} not found",
                    path.display()
                ))
            } else {
                Error::io(path, e)
            }
        })?;
        let meta: CheckpointMeta = serde_json::from_str(&text)?;
        if meta.schema_version != CHECKPOINT_SCHEMA_VERSION {
            return Err(Error::Decode(format!(
                "unsupported checkpoint schema version {}",
                meta.schema_version
            )));
        }
        Ok(meta)
    }
}

/// Sidecar path for a checkpoint file (`last.ckpt` -> `last.json`).
pub fn checkpoint_meta_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("json")
}

/// One line of the JSON-lines training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Excitation blend weight in force this epoch (0 when disabled).
    pub alpha: f64,
    /// KL annealing weight (0 under the cross-entropy objective).
    pub rho: f64,
    /// Calibration weight (0 under the cross-entropy objective).
    pub lambda: f64,
    pub train_loss: f64,
    pub train_nll: f64,
    pub train_kl: f64,
    pub train_calibration: f64,
    /// Mean and max pre-clip global gradient norm over the epoch's steps.
    pub grad_norm_mean: f64,
    pub grad_norm_max: f64,
    pub val_accuracy: f64,
    /// Validation F1 of event predictions at the 0.5 operating point;
    /// drives best-checkpoint selection.
    pub val_f1: f64,
    pub val_mean_uncertainty: f64,
    /// Wall-clock seconds; omitted in deterministic mode so logs are
    /// byte-reproducible.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seconds: Option<f64>,
}

/// Summary of a `fit` call.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Epochs executed by this call (0 when already complete).
    pub epochs_run: usize,
    pub best_val_f1: f64,
    pub best_epoch: Option<usize>,
    /// Log records produced by this call.
    pub records: Vec<EpochRecord>,
}

/// Score every clip in eval mode. `p_delivery` is the expected delivery
/// probability; uncertainty is Dirichlet vacuity for the evidential head and
/// the confidence complement for the softmax baseline.
pub fn score_clips(
    model: &mut MobileNet3dV2<f32>,
    data: &dyn ClipSource,
    objective: Objective,
    evidence: EvidenceKind,
) -> Result<Vec<EventScore>> {
    let delivery = Label::Delivery.class_index();
    let mut out = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let sample = data.sample(i, false, None)?;
        let raw = model.forward(&sample.tensor, false, None, None)?;
        let raw64: Vec<f64> = raw.iter().map(|&v| v as f64).collect();
        let (p, u) = match objective {
            Objective::Evidential => {
                let d = dirichlet_output(&raw64, evidence)?;
                (d.probs[delivery], d.uncertainty)
            }
            Objective::CrossEntropy => {
                let probs = softmax(&raw64);
                let max = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (probs[delivery], 1.0 - max)
            }
        };
        out.push(EventScore {
            video_id: sample.video_id.clone(),
            event_id: sample.event_id,
            actual: sample.label,
            p_delivery: p,
            uncertainty: u,
        });
    }
    Ok(out)
}

fn val_stats(scores: &[EventScore]) -> (f64, f64, f64) {
    let mut counts = ConfusionCounts::default();
    let mut u_sum = 0.0;
    for s in scores {
        counts.add(s.predicted().is_delivery(), s.actual.is_delivery());
        u_sum += s.uncertainty;
    }
    (counts.accuracy(), counts.f1(), u_sum / scores.len().max(1) as f64)
}

fn rasterize_masks(
    sample: &ClipSample,
    excite_layers: &[usize],
    feat_dims: &[[usize; 4]],
    input_hw: (usize, usize),
) -> Result<BTreeMap<usize, Array3<u8>>> {
    let mut masks = BTreeMap::new();
    for &l in excite_layers {
        let d = feat_dims[l];
        masks.insert(l, build_mask(&sample.person_boxes, input_hw, (d[1], d[2], d[3]))?);
    }
    Ok(masks)
}

fn write_checkpoint(path: &Path, tensors: &[(String, ArrayD<f32>)]) -> Result<()> {
    let tmp = path.with_extension("ckpt.tmp");
    save_tensors(&tmp, tensors)?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Train the classifier on `train_data`, validating on `val_data` after
/// every epoch and checkpointing both the latest state (with optimizer
/// moments, resumable) and the best state by validation F1.
///
/// `epoch_limit` caps how many total epochs may be completed by this call
/// without changing any schedule; combined with `resume` it splits a run
/// into parts that reproduce an uninterrupted run bit-for-bit.
pub fn fit(
    cfg: &Config,
    train_data: &dyn ClipSource,
    val_data: &dyn ClipSource,
    out_dir: &Path,
    resume: bool,
    epoch_limit: Option<usize>,
) -> Result<FitResult> {
    cfg.validate()?;
    if train_data.is_empty() || val_data.is_empty() {
        return Err(Error::InvalidInput(
            "training requires non-empty train and validation splits".into(),
        ));
    }
    let (frames, size) = (cfg.clip.frames, cfg.clip.size);
    let total_epochs = cfg.train.epochs;
    let width = resolve_width(cfg)?;
    let mut model = build_backbone::<f32>(
        &cfg.model.arch,
        width,
        cfg.model.num_classes,
        cfg.model.dropout,
        cfg.seed,
    )?;
    let feat_dims = model.feature_dims([3, frames, size, size])?;
    let final_dims = feat_dims.last().expect("feature dims include the input");
    if final_dims[1] * final_dims[2] * final_dims[3] <= 1 {
        return Err(Error::Config(format!(
            "clip input [3, {frames}, {size}, {size}] collapses to a single feature cell \
             {final_dims:?}; per-sample normalization would zero it — use a larger clip size \
             or frame count"
        )));
    }
    if cfg.train.excitation {
        for &l in &cfg.model.excite_layers {
            if l == 0 || l >= feat_dims.len() {
                return Err(Error::Config(format!(
                    "excite layer {l} out of range; valid feature maps are 1..={}",
                    feat_dims.len() - 1
                )));
            }
        }
    }
    let mut adam = AdamW::<f32>::new();

    let meta_template = CheckpointMeta {
        schema_version: CHECKPOINT_SCHEMA_VERSION,
        arch: cfg.model.arch.clone(),
        width_mult: width,
        num_classes: cfg.model.num_classes,
        dropout: cfg.model.dropout,
        excite_layers: cfg.model.excite_layers.clone(),
        excitation: cfg.train.excitation,
        clip_frames: frames,
        clip_size: size,
        objective: cfg.train.objective,
        evidence: cfg.train.evidence,
        epochs_completed: 0,
        total_epochs,
        optimizer_step: 0,
        best_val_f1: -1.0,
        best_epoch: None,
        config_hash: cfg.content_hash(),
        seed: cfg.seed,
    };

    let last_ckpt = out_dir.join(LAST_CHECKPOINT);
    let best_ckpt = out_dir.join(BEST_CHECKPOINT);
    let log_path = out_dir.join(TRAIN_LOG);

    let mut start_epoch = 0usize;
    let mut best_val_f1 = -1.0f64;
    let mut best_epoch: Option<usize> = None;
    if resume {
        let meta = CheckpointMeta::load(&checkpoint_meta_path(&last_ckpt))?;
        check_resume_compat(&meta, &meta_template)?;
        let tensors = load_tensors(&last_ckpt)?;
        let model_tensors: Vec<(String, ArrayD<f32>)> =
            tensors.iter().filter(|(n, _)| !n.starts_with("adam.")).cloned().collect();
        model.load_state(&model_tensors)?;
        adam.load_state(&tensors, meta.optimizer_step)?;
        start_epoch = meta.epochs_completed;
        best_val_f1 = meta.best_val_f1;
        best_epoch = meta.best_epoch;
    }

    let end_epoch = total_epochs.min(epoch_limit.unwrap_or(usize::MAX));
    if start_epoch >= end_epoch {
        return Ok(FitResult {
            epochs_run: 0,
            best_val_f1,
            best_epoch,
            records: Vec::new(),
        });
    }

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    // Rebuild the log: keep lines from epochs that still stand, drop the rest.
    let mut kept_lines: Vec<String> = Vec::new();
    if resume {
        if let Ok(text) = fs::read_to_string(&log_path) {
            for line in text.lines() {
                if let Ok(rec) = serde_json::from_str::<EpochRecord>(line) {
                    if rec.epoch < start_epoch {
                        kept_lines.push(line.to_string());
                    }
                }
            }
        }
    }
    let mut log_text = kept_lines.join("\n");
    if !log_text.is_empty() {
        log_text.push('\n');
    }
    fs::write(&log_path, log_text).map_err(|e| Error::io(&log_path, e))?;
    let mut log_file = fs::OpenOptions::new()
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;

    let n_train = train_data.len();
    let mut records = Vec::new();

    for epoch in start_epoch..end_epoch {
        let started = Instant::now();
        let lr = lr_at(epoch, &cfg.train);
        let alpha = if cfg.train.excitation { excite_alpha(epoch, total_epochs) } else { 0.0 };
        let loss_params = match cfg.train.objective {
            Objective::Evidential => Some(LossParams {
                kind: cfg.train.evidence,
                focal_gamma: cfg.train.focal_gamma,
                rho: rho_schedule(epoch),
                lambda: lambda_schedule(epoch, total_epochs, cfg.train.lambda0)?,
            }),
            Objective::CrossEntropy => None,
        };

        let mut order: Vec<usize> = (0..n_train).collect();
        order.shuffle(&mut derived_rng(cfg.seed, "epoch-shuffle", epoch as u64));

        let mut sums = LossTerms { nll: 0.0, kl: 0.0, calibration: 0.0, total: 0.0 };
        let mut norm_sum = 0.0f64;
        let mut norm_max = 0.0f64;
        let mut steps = 0usize;

        for (batch_idx, chunk) in order.chunks(cfg.train.batch_size).enumerate() {
            for p in model.params_mut() {
                p.zero_grad();
            }
            let bsz = chunk.len() as f64;
            let mut batch_ids: Vec<String> = Vec::with_capacity(chunk.len());
            for (k, &idx) in chunk.iter().enumerate() {
                let counter = (epoch * n_train + batch_idx * cfg.train.batch_size + k) as u64;
                let mut aug_rng = derived_rng(cfg.seed, "augment", counter);
                let sample = train_data.sample(idx, true, Some(&mut aug_rng))?;
                batch_ids.push(format!("{}#{}", sample.video_id, sample.event_id));
                if sample.tensor.dim() != (3, frames, size, size) {
                    return Err(Error::ShapeMismatch(format!(
                        "clip tensor {:?} does not match configured input [3, {frames}, {size}, {size}]",
                        sample.tensor.dim()
                    )));
                }
                let diagnose = |e: Error| match e {
                    Error::NonFinite(msg) => Error::NonFinite(format!(
                        "{msg} (epoch {epoch}, batch {batch_idx}, video {}, event {})",
                        sample.video_id, sample.event_id
                    )),
                    other => other,
                };
                let masks = if cfg.train.excitation {
                    Some(rasterize_masks(&sample, &cfg.model.excite_layers, &feat_dims, (size, size))?)
                } else {
                    None
                };
                let exc = masks.as_ref().map(|m| ExcitationInputs { alpha, masks: m });
                let mut drop_rng = derived_rng(cfg.seed, "dropout", counter);
                let raw = model
                    .forward(&sample.tensor, true, exc.as_ref(), Some(&mut drop_rng))
                    .map_err(diagnose)?;
                let raw64: Vec<f64> = raw.iter().map(|&v| v as f64).collect();
                let target = sample.label.class_index();
                let (terms, grad) = match &loss_params {
                    Some(params) => {
                        evidential_loss_and_grad(&raw64, target, params).map_err(diagnose)?
                    }
                    None => {
                        let (loss, grad) =
                            cross_entropy_loss_and_grad(&raw64, target).map_err(diagnose)?;
                        (LossTerms { nll: loss, kl: 0.0, calibration: 0.0, total: loss }, grad)
                    }
                };
                if !terms.total.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "loss diverged (epoch {epoch}, batch {batch_idx}, video {}, event {})",
                        sample.video_id, sample.event_id
                    )));
                }
                sums.nll += terms.nll;
                sums.kl += terms.kl;
                sums.calibration += terms.calibration;
                sums.total += terms.total;
                let g_scaled: Array1<f32> =
                    grad.iter().map(|&g| (g / bsz) as f32).collect::<Vec<f32>>().into();
                model.backward(&g_scaled)?;
            }
            let mut params = model.params_mut();
            let pre_norm = clip_global_norm(&mut params, cfg.train.grad_clip);
            // ReLU-family clamps can swallow NaN activations on the forward
            // pass, so divergence may only surface in the gradients; abort
            // before the update poisons the weights.
            if !pre_norm.is_finite() {
                return Err(Error::NonFinite(format!(
                    "gradient norm diverged (epoch {epoch}, batch {batch_idx}, videos [{}])",
                    batch_ids.join(", ")
                )));
            }
            adam.update(&mut params, lr, cfg.train.weight_decay)?;
            norm_sum += pre_norm;
            norm_max = norm_max.max(pre_norm);
            steps += 1;
        }

        let val_scores =
            score_clips(&mut model, val_data, cfg.train.objective, cfg.train.evidence)?;
        let (val_accuracy, val_f1, val_mean_uncertainty) = val_stats(&val_scores);

        if val_f1 > best_val_f1 {
            best_val_f1 = val_f1;
            best_epoch = Some(epoch);
            write_checkpoint(&best_ckpt, &model.state_tensors())?;
            let mut meta = meta_template.clone();
            meta.epochs_completed = epoch + 1;
            meta.optimizer_step = adam.step;
            meta.best_val_f1 = best_val_f1;
            meta.best_epoch = best_epoch;
            meta.save(&checkpoint_meta_path(&best_ckpt))?;
        }

        let mut tensors = model.state_tensors();
        tensors.extend(adam.state_tensors());
        write_checkpoint(&last_ckpt, &tensors)?;
        let mut meta = meta_template.clone();
        meta.epochs_completed = epoch + 1;
        meta.optimizer_step = adam.step;
        meta.best_val_f1 = best_val_f1;
        meta.best_epoch = best_epoch;
        meta.save(&checkpoint_meta_path(&last_ckpt))?;

        let n = n_train as f64;
        let record = EpochRecord {
            epoch,
            lr,
            alpha,
            rho: loss_params.as_ref().map_or(0.0, |p| p.rho),
            lambda: loss_params.as_ref().map_or(0.0, |p| p.lambda),
            train_loss: sums.total / n,
            train_nll: sums.nll / n,
            train_kl: sums.kl / n,
            train_calibration: sums.calibration / n,
            grad_norm_mean: norm_sum / steps.max(1) as f64,
            grad_norm_max: norm_max,
            val_accuracy,
            val_f1,
            val_mean_uncertainty,
            seconds: if cfg.deterministic {
                None
            } else {
                Some(started.elapsed().as_secs_f64())
            },
        };
        let line = serde_json::to_string(&record)?;
        writeln!(log_file, "{line}").map_err(|e| Error::io(&log_path, e))?;
        log_file.flush().map_err(|e| Error::io(&log_path, e))?;
        records.push(record);
    }

    Ok(FitResult {
        epochs_run: records.len(),
        best_val_f1,
        best_epoch,
        records,
    })
}

fn check_resume_compat(saved: &CheckpointMeta, now: &CheckpointMeta) -> Result<()> {
    let mut mismatches = Vec::new();
    if saved.arch != now.arch {
        mismatches.push(format!("arch {} vs {}", saved.arch, now.arch));
    }
    if saved.width_mult != now.width_mult {
        mismatches.push(format!("width_mult {} vs {}", saved.width_mult, now.width_mult));
    }
    if saved.num_classes != now.num_classes {
        mismatches.push(format!("num_classes {} vs {}", saved.num_classes, now.num_classes));
    }
    if saved.clip_frames != now.clip_frames || saved.clip_size != now.clip_size {
        mismatches.push(format!(
            "clip input {}x{} vs {}x{}",
            saved.clip_frames, saved.clip_size, now.clip_frames, now.clip_size
        ));
    }
    if saved.objective != now.objective {
        mismatches.push("objective".into());
    }
    if saved.evidence != now.evidence {
        mismatches.push("evidence transform".into());
    }
    if saved.excitation != now.excitation || saved.excite_layers != now.excite_layers {
        mismatches.push("excitation settings".into());
    }
    if saved.total_epochs != now.total_epochs {
        mismatches.push(format!(
            "total_epochs {} vs {} (schedules would shift)",
            saved.total_epochs, now.total_epochs
        ));
    }
    if saved.seed != now.seed {
        mismatches.push(format!("seed {} vs {}", saved.seed, now.seed));
    }
    if mismatches.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "checkpoint is incompatible with the current configuration: {}",
            mismatches.join("; ")
        )))
    }
}
