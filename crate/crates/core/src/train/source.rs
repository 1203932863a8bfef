//! Clip feeding for the fit loop.
//!
//! The loop addresses samples by index so epoch shuffles stay a pure
//! function of the seed; sources decide how a given index becomes a tensor.

use rand_chacha::ChaCha8Rng;

use crate::config::ClipConfig;
use crate::data::{sample_clip, ClipSample, EventDataset};
use crate::error::{Error, Result};

/// Index-addressable supply of classifier inputs.
pub trait ClipSource {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Materialize one clip. `augment = true` requires an RNG and may jitter
    /// the clip; `augment = false` must be deterministic.
    fn sample(
        &self,
        index: usize,
        augment: bool,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ClipSample>;
}

/// Clips decoded on demand from a corpus directory.
pub struct DatasetClips<'a> {
    dataset: &'a EventDataset,
    clip: ClipConfig,
}

impl<'a> DatasetClips<'a> {
    pub fn new(dataset: &'a EventDataset, clip: ClipConfig) -> Self {
        DatasetClips { dataset, clip }
    }
}

impl ClipSource for DatasetClips<'_> {
    fn len(&self) -> usize {
        self.dataset.len()
    }

    fn sample(
        &self,
        index: usize,
        augment: bool,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ClipSample> {
        let ev = self
            .dataset
            .items
            .get(index)
            .ok_or_else(|| Error::InvalidInput(format!("clip index {index} out of range")))?;
        let frames = self.dataset.open_video(&ev.video_id)?;
        let ann = self.dataset.annotation(&ev.video_id)?;
        sample_clip(&frames, Some(&ann), ev, &self.clip, augment, rng)
    }
}

/// Pre-built clips held in memory; augmentation is a no-op. Used by tests
/// and smoke runs that need full control over the tensors.
pub struct MemoryClips {
    pub samples: Vec<ClipSample>,
}

impl ClipSource for MemoryClips {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn sample(
        &self,
        index: usize,
        _augment: bool,
        _rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ClipSample> {
        self.samples
            .get(index)
            .cloned()
            .ok_or_else(|| Error::InvalidInput(format!("clip index {index} out of range")))
    }
}
