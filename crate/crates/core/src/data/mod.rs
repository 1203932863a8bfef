//! Corpus layout, annotations, proposal labeling, splits and clip sampling.
//!
//! A corpus root contains:
//!
//! ```text
//! root/
//!   videos/<video_id>/frame_000000.jpg ...
//!   annotations/<video_id>.json
//!   splits.json
//!   manifest.json
//! ```
//!
//! Proposal (`events.json`) and label (`labels.json`) artifacts are written
//! next to it by the pipeline stages.

mod annotation;
mod clip;
mod label;
mod split;

pub use annotation::{ActivitySpan, Label, SubjectTrack, VideoAnnotation};
pub use clip::{clip_frame_indices, normalize_per_channel, sample_clip, ClipSample};
pub use label::{label_corpus, label_event, LabeledEvent, LabelsFile};
pub use split::{make_splits, Split, SplitsFile};

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::imaging::FrameDir;

pub const SPLITS_FILE: &str = "splits.json";
pub const EVENTS_FILE: &str = "events.json";
pub const LABELS_FILE: &str = "labels.json";
pub const CORPUS_MANIFEST_FILE: &str = "manifest.json";

pub fn videos_dir(root: &Path) -> PathBuf {
    root.join("videos")
}

pub fn video_dir(root: &Path, video_id: &str) -> PathBuf {
    videos_dir(root).join(video_id)
}

pub fn annotations_dir(root: &Path) -> PathBuf {
    root.join("annotations")
}

pub fn annotation_path(root: &Path, video_id: &str) -> PathBuf {
    annotations_dir(root).join(format!("{video_id}.json"))
}

/// Video ids found in the corpus annotation directory, sorted.
pub fn list_video_ids(root: &Path) -> Result<Vec<String>> {
    let dir = annotations_dir(root);
    let entries = std::fs::read_dir(&dir).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            Error::MissingArtifact(format!("annotation directory {}", dir.display()))
        }
        _ => Error::io(&dir, e),
    })?;
    let mut ids = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(&dir, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(stem) = name.strip_suffix(".json") {
            ids.push(stem.to_string());
        }
    }
    ids.sort();
    Ok(ids)
}

/// Labeled events of one split, with access to the backing videos.
#[derive(Debug)]
pub struct EventDataset {
    root: PathBuf,
    pub split: Split,
    pub items: Vec<LabeledEvent>,
}

impl EventDataset {
    pub fn new(
        root: &Path,
        labels: &LabelsFile,
        splits: &SplitsFile,
        split: Split,
    ) -> Result<EventDataset> {
        for ev in &labels.events {
            if splits.split_of(&ev.camera_id).is_none() {
                return Err(Error::InvalidInput(format!(
                    "camera {} of video {} is not assigned to any split",
                    ev.camera_id, ev.video_id
                )));
            }
        }
        let items = labels
            .events
            .iter()
            .filter(|ev| splits.split_of(&ev.camera_id) == Some(split))
            .cloned()
            .collect();
        Ok(EventDataset { root: root.to_path_buf(), split, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// (non-delivery, delivery) event counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let delivery = self.items.iter().filter(|e| e.label.is_delivery()).count();
        (self.items.len() - delivery, delivery)
    }

    pub fn open_video(&self, video_id: &str) -> Result<FrameDir> {
        let dir = video_dir(&self.root, video_id);
        if !dir.is_dir() {
            return Err(Error::MissingArtifact(format!("video directory {}", dir.display())));
        }
        FrameDir::open(dir)
    }

    pub fn annotation(&self, video_id: &str) -> Result<VideoAnnotation> {
        VideoAnnotation::load(&annotation_path(&self.root, video_id))
    }
}
