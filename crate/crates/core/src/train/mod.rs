//! Classifier training: optimizer, schedules and the resumable fit loop.
//!
//! One epoch counter drives everything coupled to training progress — the
//! learning rate (warmup then step decays), the excitation blend weight, the
//! KL annealing weight and the calibration weight — so the artifacts a run
//! leaves behind (JSON-lines epoch log, `last.ckpt` + sidecar, `best.ckpt` +
//! sidecar) are enough to audit the schedules and to resume bit-identically.

mod fit;
mod optimizer;
mod source;

pub use fit::{
    checkpoint_meta_path, fit, lr_at, resolve_width, score_clips, CheckpointMeta, EpochRecord,
    FitResult, BEST_CHECKPOINT, CHECKPOINT_SCHEMA_VERSION, LAST_CHECKPOINT, TRAIN_LOG,
};
pub use optimizer::{clip_global_norm, AdamW};
pub use source::{ClipSource, DatasetClips, MemoryClips};
