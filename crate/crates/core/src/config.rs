//! Typed run configuration.
//!
//! One [`Config`] tree drives every pipeline stage. Files may be TOML or
//! JSON; missing fields take defaults, unknown fields are rejected so typos
//! fail loudly. [`Config::content_hash`] produces a canonical digest (sorted
//! keys, shortest-round-trip floats) that is stamped into run manifests and
//! checkpoints so artifacts can be traced back to the exact settings that
//! produced them.

use std::fmt;
use std::path::Path;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evidential::EvidenceKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Master seed; all stage seeds are derived from it.
    pub seed: u64,
    /// When set, manifests omit wall-clock fields so identical runs produce
    /// byte-identical artifacts.
    pub deterministic: bool,
    pub synth: SynthConfig,
    pub motion: MotionConfig,
    pub labeling: LabelingConfig,
    pub clip: ClipConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            deterministic: true,
            synth: SynthConfig::default(),
            motion: MotionConfig::default(),
            labeling: LabelingConfig::default(),
            clip: ClipConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

/// Synthetic corpus generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub cameras: u32,
    pub videos_per_camera: u32,
    pub width: u32,
    pub height: u32,
    pub fps: u32,
    pub frames_per_video: u32,
    pub jpeg_quality: u8,
    /// Relative draw weights per scenario; delivery : rest defaults to 3 : 6,
    /// i.e. the 1:2 class balance of the target domain.
    pub weight_delivery: u32,
    pub weight_walk_by: u32,
    pub weight_resident_exit: u32,
    pub weight_static_distractor: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            cameras: 30,
            videos_per_camera: 10,
            width: 320,
            height: 240,
            fps: 10,
            frames_per_video: 120,
            jpeg_quality: 90,
            weight_delivery: 3,
            weight_walk_by: 2,
            weight_resident_exit: 2,
            weight_static_distractor: 2,
        }
    }
}

/// Per-pixel Gaussian-mixture background model settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MogConfig {
    /// Gaussians per pixel.
    pub components: usize,
    /// Online update rate rho.
    pub learning_rate: f32,
    /// Cumulative weight mass treated as background.
    pub background_ratio: f32,
    /// Variance given to a freshly (re)seeded component.
    pub initial_variance: f32,
    /// Lower bound applied to component variances.
    pub variance_floor: f32,
    /// Match gate in standard deviations.
    pub match_sigma: f32,
}

impl Default for MogConfig {
    fn default() -> Self {
        MogConfig {
            components: 5,
            learning_rate: 0.005,
            background_ratio: 0.7,
            initial_variance: 225.0,
            variance_floor: 4.0,
            match_sigma: 2.5,
        }
    }
}

/// Motion proposal engine settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionConfig {
    /// Frames are downscaled to this resolution before background modelling.
    pub processing_width: u32,
    pub processing_height: u32,
    pub mog: MogConfig,
    /// Minimum blob area in processing-resolution pixels.
    pub min_blob_area: u32,
    /// Greedy track association gate, native pixels.
    pub max_match_dist: f32,
    /// Frames a track may go unmatched before it is closed.
    pub max_missed: u32,
    /// Trigger: minimum frames between first and last sighting.
    pub min_active_frames: u32,
    /// Trigger: minimum centroid variance (var_x + var_y), native pixels^2.
    pub min_centroid_variance: f64,
    /// Candidate square thumbnail side lengths, ascending.
    pub thumbnail_ladder: Vec<u32>,
    /// Tracks longer than this are flushed into an event and restarted
    /// (2 minutes at 30 fps by default).
    pub max_event_frames: u32,
}

impl Default for MotionConfig {
    fn default() -> Self {
        MotionConfig {
            processing_width: 320,
            processing_height: 240,
            mog: MogConfig::default(),
            min_blob_area: 50,
            max_match_dist: 50.0,
            max_missed: 10,
            min_active_frames: 15,
            min_centroid_variance: 100.0,
            thumbnail_ladder: vec![224, 480, 960],
            max_event_frames: 3600,
        }
    }
}

impl MotionConfig {
    pub fn validate(&self) -> Result<()> {
        fn bail(msg: String) -> Result<()> {
            Err(Error::Config(msg))
        }
        if self.mog.components == 0 {
            return bail("mog.components must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.mog.learning_rate) || self.mog.learning_rate == 0.0 {
            return bail(format!("mog.learning_rate {} outside (0, 1]", self.mog.learning_rate));
        }
        if !(0.0..=1.0).contains(&self.mog.background_ratio) {
            return bail(format!(
                "mog.background_ratio {} outside [0, 1]",
                self.mog.background_ratio
            ));
        }
        if self.mog.variance_floor <= 0.0 || self.mog.initial_variance < self.mog.variance_floor {
            return bail("mog variances must satisfy 0 < floor <= initial".into());
        }
        if self.thumbnail_ladder.is_empty()
            || self.thumbnail_ladder.windows(2).any(|w| w[0] >= w[1])
        {
            return bail("thumbnail_ladder must be non-empty and strictly ascending".into());
        }
        if self.processing_width == 0 || self.processing_height == 0 {
            return bail("processing resolution must be positive".into());
        }
        if self.max_event_frames == 0 {
            return bail("max_event_frames must be positive".into());
        }
        Ok(())
    }
}

/// Event labeling and split construction settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelingConfig {
    /// Temporal IoU threshold against annotated person tracks.
    pub temporal_iou_min: f64,
    /// Spatial IoU threshold against annotated person tracks.
    pub spatial_iou_min: f64,
    /// Camera-level train/val/test fractions; must sum to 1.
    pub split_ratios: [f64; 3],
}

impl Default for LabelingConfig {
    fn default() -> Self {
        LabelingConfig { temporal_iou_min: 0.2, spatial_iou_min: 0.2, split_ratios: [0.6, 0.2, 0.2] }
    }
}

/// Clip sampling and augmentation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClipConfig {
    /// Frames per clip fed to the classifier.
    pub frames: usize,
    /// Square input side length.
    pub size: usize,
    /// Training-time jitter applied to each event endpoint, in frames.
    pub temporal_jitter: u32,
    /// Probability of applying color jitter to a training clip.
    pub color_jitter_prob: f64,
    /// Brightness/contrast/saturation factors drawn from `1 +- this`.
    pub color_jitter_range: f32,
    /// Hue shift drawn from `+- this`, in turns.
    pub hue_jitter: f32,
    /// Probability of horizontal flip.
    pub hflip_prob: f64,
}

impl Default for ClipConfig {
    fn default() -> Self {
        ClipConfig {
            frames: 16,
            size: 112,
            temporal_jitter: 10,
            color_jitter_prob: 0.2,
            color_jitter_range: 0.1,
            hue_jitter: 0.1,
            hflip_prob: 0.5,
        }
    }
}

/// Width multiplier: a fixed value or automatic selection against the
/// compute budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WidthMult {
    Auto,
    Fixed(f64),
}

impl Serialize for WidthMult {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            WidthMult::Auto => s.serialize_str("auto"),
            WidthMult::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for WidthMult {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(WidthMult::Fixed(v)),
            Raw::Text(s) if s == "auto" => Ok(WidthMult::Auto),
            Raw::Text(s) => Err(D::Error::custom(format!(
                "width_mult must be a number or \"auto\", got {s:?}"
            ))),
        }
    }
}

impl fmt::Display for WidthMult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WidthMult::Auto => write!(f, "auto"),
            WidthMult::Fixed(v) => write!(f, "{v}"),
        }
    }
}

/// Classifier architecture settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Backbone registry key.
    pub arch: String,
    pub width_mult: WidthMult,
    /// Candidates considered when `width_mult = "auto"`.
    pub width_candidates: Vec<f64>,
    /// Inference budget the auto selection targets, in GFLOPs.
    pub flops_target_g: f64,
    pub num_classes: usize,
    pub dropout: f64,
    /// Indices of feature maps that receive training-time excitation
    /// (0 = classifier input is never excitable; 1 = stem output, 2 = first
    /// inverted-residual output, ...).
    pub excite_layers: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            arch: "mobilenet3d_v2".to_string(),
            width_mult: WidthMult::Auto,
            width_candidates: vec![0.45, 0.7, 1.0],
            flops_target_g: 0.55,
            num_classes: 2,
            dropout: 0.2,
            excite_layers: vec![1, 2],
        }
    }
}

/// Loss selection for training runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Dirichlet evidence head with focal NLL, annealed KL and the
    /// accuracy-uncertainty calibration term.
    Evidential,
    /// Plain softmax cross-entropy (ablation baseline; no uncertainty).
    CrossEntropy,
}

/// Optimization settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub peak_lr: f64,
    /// Linear warmup over this many initial epochs.
    pub warmup_epochs: usize,
    /// Epochs at which the learning rate is multiplied by `lr_decay_factor`.
    pub lr_decay_epochs: Vec<usize>,
    pub lr_decay_factor: f64,
    /// Decoupled weight decay; applied to conv/linear weights only.
    pub weight_decay: f64,
    /// Global L2 gradient-norm clip.
    pub grad_clip: f64,
    pub objective: Objective,
    pub evidence: EvidenceKind,
    /// Focal modulation exponent on the evidential NLL.
    pub focal_gamma: f64,
    /// Calibration annealing floor lambda_0.
    pub lambda0: f64,
    /// Enable the training-only excitation layer.
    pub excitation: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 32,
            peak_lr: 5e-4,
            warmup_epochs: 5,
            lr_decay_epochs: vec![20, 40],
            lr_decay_factor: 0.1,
            weight_decay: 5e-4,
            grad_clip: 0.25,
            objective: Objective::Evidential,
            evidence: EvidenceKind::Softplus,
            focal_gamma: 1.0,
            lambda0: 0.01,
            excitation: true,
        }
    }
}

/// Evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// A video is called a delivery when its score is >= this threshold.
    pub video_threshold: f64,
    /// Uncertainty threshold used by the accuracy-versus-uncertainty metric.
    pub avu_uncertainty_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { video_threshold: 0.5, avu_uncertainty_threshold: 0.5 }
    }
}

impl Config {
    /// Parse a TOML or JSON config file (by extension; TOML otherwise).
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Config = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
            _ => toml::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Check cross-field invariants that serde cannot express.
    pub fn validate(&self) -> Result<()> {
        fn bail(msg: String) -> Result<()> {
            Err(Error::Config(msg))
        }
        let s = &self.synth;
        if s.width == 0 || s.height == 0 || s.frames_per_video == 0 || s.fps == 0 {
            return bail("synth dimensions, fps and frame count must be positive".into());
        }
        if !(1..=100).contains(&s.jpeg_quality) {
            return bail(format!("jpeg_quality {} outside 1..=100", s.jpeg_quality));
        }
        if s.weight_delivery == 0 {
            return bail("weight_delivery must be positive".into());
        }
        if s.weight_walk_by + s.weight_resident_exit + s.weight_static_distractor == 0 {
            return bail("at least one non-delivery scenario weight must be positive".into());
        }

        self.motion.validate()?;

        let l = &self.labeling;
        for v in [l.temporal_iou_min, l.spatial_iou_min] {
            if !(0.0..=1.0).contains(&v) {
                return bail(format!("IoU threshold {v} outside [0, 1]"));
            }
        }
        let ratio_sum: f64 = l.split_ratios.iter().sum();
        if (ratio_sum - 1.0).abs() > 1e-9 || l.split_ratios.iter().any(|&r| r <= 0.0) {
            return bail(format!("split_ratios {:?} must be positive and sum to 1", l.split_ratios));
        }

        let c = &self.clip;
        if c.frames < 2 || c.size == 0 {
            return bail("clip.frames must be >= 2 and clip.size positive".into());
        }
        for p in [c.color_jitter_prob, c.hflip_prob] {
            if !(0.0..=1.0).contains(&p) {
                return bail(format!("probability {p} outside [0, 1]"));
            }
        }
        if c.color_jitter_range < 0.0 || c.color_jitter_range >= 1.0 {
            return bail("color_jitter_range must be in [0, 1)".into());
        }

        let md = &self.model;
        if md.num_classes < 2 {
            return bail("num_classes must be >= 2".into());
        }
        if !(0.0..=1.0).contains(&md.dropout) {
            return bail(format!("dropout {} outside [0, 1]", md.dropout));
        }
        if let WidthMult::Fixed(w) = md.width_mult {
            if w <= 0.0 {
                return bail(format!("width_mult {w} must be positive"));
            }
        }
        if md.width_candidates.is_empty() || md.width_candidates.iter().any(|&w| w <= 0.0) {
            return bail("width_candidates must be non-empty and positive".into());
        }

        let t = &self.train;
        if t.epochs == 0 || t.batch_size == 0 {
            return bail("epochs and batch_size must be positive".into());
        }
        if t.peak_lr <= 0.0 || t.lr_decay_factor <= 0.0 || t.lr_decay_factor > 1.0 {
            return bail("learning-rate settings out of range".into());
        }
        if t.lr_decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return bail("lr_decay_epochs must be strictly ascending".into());
        }
        if let Some(&first) = t.lr_decay_epochs.first() {
            if t.warmup_epochs >= first {
                return bail(format!(
                    "warmup_epochs {} must precede first decay epoch {first}",
                    t.warmup_epochs
                ));
            }
        }
        if t.focal_gamma < 0.0 {
            return bail("focal_gamma must be >= 0".into());
        }
        if t.lambda0 <= 0.0 || t.lambda0 >= 1.0 {
            return bail(format!("lambda0 {} outside (0, 1)", t.lambda0));
        }
        if t.grad_clip <= 0.0 || t.weight_decay < 0.0 {
            return bail("grad_clip must be positive and weight_decay non-negative".into());
        }

        let e = &self.eval;
        for v in [e.video_threshold, e.avu_uncertainty_threshold] {
            if !(0.0..=1.0).contains(&v) {
                return bail(format!("eval threshold {v} outside [0, 1]"));
            }
        }
        Ok(())
    }

    /// Canonical content digest: JSON with recursively sorted keys, hashed
    /// with SHA-256. Two configs with equal field values always hash equal,
    /// regardless of the file format or key order they were parsed from.
    pub fn content_hash(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let mut canon = String::new();
        write_canonical(&value, &mut canon);
        let mut h = Sha256::new();
        h.update(canon.as_bytes());
        hex(&h.finalize())
    }
}

fn write_canonical(v: &serde_json::Value, out: &mut String) {
    match v {
        serde_json::Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, k) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(k).expect("string serializes"));
                out.push(':');
                write_canonical(&map[*k], out);
            }
            out.push('}');
        }
        serde_json::Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        other => out.push_str(&other.to_string()),
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
