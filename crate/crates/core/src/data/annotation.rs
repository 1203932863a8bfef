//! Ground-truth annotations for one video.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoxPx, FrameInterval};

/// Binary classification target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    NonDelivery,
    Delivery,
}

impl Label {
    /// Class index used by the classifier head.
    pub fn class_index(self) -> usize {
        match self {
            Label::NonDelivery => 0,
            Label::Delivery => 1,
        }
    }

    pub fn from_class_index(i: usize) -> Result<Label> {
        match i {
            0 => Ok(Label::NonDelivery),
            1 => Ok(Label::Delivery),
            _ => Err(Error::InvalidInput(format!("class index {i} out of range"))),
        }
    }

    pub fn is_delivery(self) -> bool {
        self == Label::Delivery
    }
}

/// A moving subject annotated with per-frame bounding boxes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectTrack {
    pub id: u64,
    /// Whether this subject constitutes a delivery.
    pub tag: Label,
    /// Frame index -> box, native resolution.
    pub boxes: BTreeMap<u32, BoxPx>,
}

impl SubjectTrack {
    /// First-to-last annotated frame, inclusive.
    pub fn frame_interval(&self) -> Option<FrameInterval> {
        let first = *self.boxes.keys().next()?;
        let last = *self.boxes.keys().next_back()?;
        Some(FrameInterval::new(first, last))
    }

    /// Union of the boxes annotated within `interval`.
    pub fn union_box_over(&self, interval: FrameInterval) -> Option<BoxPx> {
        let mut acc: Option<BoxPx> = None;
        for (_, b) in self.boxes.range(interval.start..=interval.end) {
            acc = Some(match acc {
                Some(u) => u.union_bounds(b),
                None => *b,
            });
        }
        acc
    }

    /// Box annotated at one frame, if any.
    pub fn box_at(&self, frame: u32) -> Option<BoxPx> {
        self.boxes.get(&frame).copied()
    }
}

/// A ground-truth activity span (scenario name plus frame range).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivitySpan {
    pub kind: String,
    pub start_frame: u32,
    pub end_frame: u32,
}

/// Complete ground truth for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoAnnotation {
    pub schema_version: u32,
    pub video_id: String,
    pub camera_id: String,
    pub width: u32,
    pub height: u32,
    pub num_frames: u32,
    pub fps: u32,
    /// Video-level target: delivery when any annotated activity is one.
    pub video_tag: Label,
    pub tracks: Vec<SubjectTrack>,
    pub activities: Vec<ActivitySpan>,
}

impl VideoAnnotation {
    pub const SCHEMA_VERSION: u32 = 1;

    pub fn load(path: &Path) -> Result<VideoAnnotation> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                Error::MissingArtifact(format!("annotation {}", path.display()))
            }
            _ => Error::io(path, e),
        })?;
        let ann: VideoAnnotation = serde_json::from_str(&text)?;
        if ann.schema_version != Self::SCHEMA_VERSION {
            return Err(Error::Decode(format!(
                "{}: unsupported annotation schema {}",
                path.display(),
                ann.schema_version
            )));
        }
        Ok(ann)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn track(&self, id: u64) -> Option<&SubjectTrack> {
        self.tracks.iter().find(|t| t.id == id)
    }
}
