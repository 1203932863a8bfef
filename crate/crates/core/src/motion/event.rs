//! Motion events: qualifying tracks, thumbnail crops, and the on-disk schema.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoxPx;

use super::track::Track;

/// Thresholds a closed track must clear to become an event proposal.
#[derive(Debug, Clone, Copy)]
pub struct EventTriggers {
    pub min_active_frames: u32,
    pub min_centroid_variance: f64,
}

impl EventTriggers {
    pub fn qualifies(&self, track: &Track) -> bool {
        track.observed >= self.min_active_frames
            && track.centroid_variance() >= self.min_centroid_variance
    }
}

/// Square crop window for an event region.
///
/// The side is the smallest ladder entry that covers the region's larger
/// dimension (or that dimension itself when it exceeds the ladder). The
/// window is centered on the region, shifted to stay inside the frame, and
/// clipped per axis when the side exceeds the frame.
pub fn thumbnail_box(roi: &BoxPx, ladder: &[u32], frame_w: u32, frame_h: u32) -> BoxPx {
    let need = roi.width().max(roi.height()).max(1);
    let side = ladder.iter().copied().find(|&s| s >= need).unwrap_or(need);
    let (x0, x1) = axis_fit(roi.x0, roi.x1, side, frame_w);
    let (y0, y1) = axis_fit(roi.y0, roi.y1, side, frame_h);
    BoxPx::new(x0, y0, x1, y1)
}

fn axis_fit(lo: u32, hi: u32, side: u32, limit: u32) -> (u32, u32) {
    if side >= limit {
        return (0, limit);
    }
    let centered = (lo as i64 + hi as i64 - side as i64).div_euclid(2);
    let start = centered.clamp(0, (limit - side) as i64) as u32;
    (start, start + side)
}

/// One motion proposal inside a single video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionEvent {
    pub id: u64,
    pub start_frame: u32,
    pub end_frame: u32,
    /// Union of the track's bounding boxes, native resolution.
    pub roi: BoxPx,
    /// Suggested crop window for classification, native resolution.
    pub thumbnail: BoxPx,
    pub active_frames: u32,
    pub centroid_variance: f64,
}

impl MotionEvent {
    pub fn from_track(id: u64, track: &Track, ladder: &[u32], frame_w: u32, frame_h: u32) -> Self {
        MotionEvent {
            id,
            start_frame: track.start_frame,
            end_frame: track.last_frame,
            roi: track.union_box,
            thumbnail: thumbnail_box(&track.union_box, ladder, frame_w, frame_h),
            active_frames: track.observed,
            centroid_variance: track.centroid_variance(),
        }
    }
}

/// All proposals for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoEvents {
    pub video_id: String,
    pub width: u32,
    pub height: u32,
    pub num_frames: u32,
    pub events: Vec<MotionEvent>,
}

/// The proposal artifact covering a corpus, ordered by video id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventsFile {
    pub schema_version: u32,
    pub videos: Vec<VideoEvents>,
}

impl EventsFile {
    pub const SCHEMA_VERSION: u32 = 1;

    pub fn new(mut videos: Vec<VideoEvents>) -> Self {
        videos.sort_by(|a, b| a.video_id.cmp(&b.video_id));
        EventsFile { schema_version: Self::SCHEMA_VERSION, videos }
    }

    pub fn load(path: &Path) -> Result<EventsFile> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                Error::MissingArtifact(format!("events {}", path.display()))
            }
            _ => Error::io(path, e),
        })?;
        let f: EventsFile = serde_json::from_str(&text)?;
        if f.schema_version != Self::SCHEMA_VERSION {
            return Err(Error::Decode(format!(
                "{}: unsupported events schema {}",
                path.display(),
                f.schema_version
            )));
        }
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
