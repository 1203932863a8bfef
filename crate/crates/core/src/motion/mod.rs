//! Motion-proposal engine.
//!
//! Frames are converted to grayscale, downscaled to a fixed processing
//! resolution, and fed to an adaptive per-pixel background mixture. The
//! resulting foreground masks are grouped into 8-connected blobs, scaled
//! back to native coordinates, and stitched into tracks by greedy
//! nearest-centroid matching. Tracks that stay active long enough and move
//! enough become event proposals with a square thumbnail crop suggestion.

mod blob;
mod event;
mod mog;
mod track;

pub use blob::{extract_blobs, Blob};
pub use event::{thumbnail_box, EventTriggers, EventsFile, MotionEvent, VideoEvents};
pub use mog::MogModel;
pub use track::{Track, Tracker, TrackerConfig};

use ndarray::Array2;

use crate::config::MotionConfig;
use crate::error::{Error, Result};
use crate::geometry::BoxPx;
use crate::imaging::{luma_f32, resize_plane, FrameSource, Resample};

/// Streaming proposal extractor for one video.
#[derive(Debug)]
pub struct ProposalEngine {
    cfg: MotionConfig,
    native_w: u32,
    native_h: u32,
    mog: MogModel,
    tracker: Tracker,
    frame_idx: u32,
    closed: Vec<Track>,
}

impl ProposalEngine {
    pub fn new(cfg: &MotionConfig, native_w: u32, native_h: u32) -> Result<Self> {
        if native_w == 0 || native_h == 0 {
            return Err(Error::InvalidInput("frame dimensions must be positive".into()));
        }
        cfg.validate()?;
        let mog = MogModel::new(
            cfg.processing_width as usize,
            cfg.processing_height as usize,
            cfg.mog.clone(),
        )?;
        let tracker = Tracker::new(TrackerConfig {
            max_match_dist: cfg.max_match_dist as f64,
            max_missed: cfg.max_missed,
            max_event_frames: cfg.max_event_frames,
        });
        Ok(ProposalEngine {
            cfg: cfg.clone(),
            native_w,
            native_h,
            mog,
            tracker,
            frame_idx: 0,
            closed: Vec::new(),
        })
    }

    /// Ingest the next frame (native resolution, RGB).
    pub fn push_frame(&mut self, frame: &image::RgbImage) -> Result<()> {
        if (frame.width(), frame.height()) != (self.native_w, self.native_h) {
            return Err(Error::ShapeMismatch(format!(
                "frame {}x{} vs video {}x{}",
                frame.width(),
                frame.height(),
                self.native_w,
                self.native_h
            )));
        }
        let luma = luma_f32(frame);
        let proc = self.to_processing(&luma);
        let mask = self.mog.update(proc.view())?;
        let blobs = extract_blobs(mask.view(), self.cfg.min_blob_area as u64);
        let scaled = self.to_native(blobs);
        let closed = self.tracker.step(self.frame_idx, &scaled);
        self.closed.extend(closed);
        self.frame_idx += 1;
        Ok(())
    }

    fn to_processing(&self, luma: &Array2<f32>) -> Array2<f32> {
        let (h, w) = luma.dim();
        let (pw, ph) = (self.cfg.processing_width as usize, self.cfg.processing_height as usize);
        if (w, h) == (pw, ph) {
            return luma.clone();
        }
        let mode = if pw <= w && ph <= h { Resample::Area } else { Resample::Bilinear };
        resize_plane(luma.view(), ph, pw, mode)
    }

    fn to_native(&self, blobs: Vec<Blob>) -> Vec<Blob> {
        let sx = self.native_w as f64 / self.cfg.processing_width as f64;
        let sy = self.native_h as f64 / self.cfg.processing_height as f64;
        if sx == 1.0 && sy == 1.0 {
            return blobs;
        }
        blobs
            .into_iter()
            .map(|b| Blob {
                bbox: BoxPx::new(
                    ((b.bbox.x0 as f64 * sx).floor() as u32).min(self.native_w),
                    ((b.bbox.y0 as f64 * sy).floor() as u32).min(self.native_h),
                    ((b.bbox.x1 as f64 * sx).ceil() as u32).min(self.native_w),
                    ((b.bbox.y1 as f64 * sy).ceil() as u32).min(self.native_h),
                ),
                centroid: (b.centroid.0 * sx, b.centroid.1 * sy),
                area: b.area,
            })
            .collect()
    }

    /// Number of frames ingested so far.
    pub fn frames_seen(&self) -> u32 {
        self.frame_idx
    }

    /// Close remaining tracks and return qualifying events ordered by
    /// start frame (ids assigned in that order).
    pub fn finish(mut self) -> Vec<MotionEvent> {
        self.closed.extend(self.tracker.finish());
        let triggers = EventTriggers {
            min_active_frames: self.cfg.min_active_frames,
            min_centroid_variance: self.cfg.min_centroid_variance,
        };
        let mut qualifying: Vec<&Track> =
            self.closed.iter().filter(|t| triggers.qualifies(t)).collect();
        qualifying.sort_by_key(|t| (t.start_frame, t.id));
        qualifying
            .iter()
            .enumerate()
            .map(|(i, t)| {
                MotionEvent::from_track(
                    i as u64,
                    t,
                    &self.cfg.thumbnail_ladder,
                    self.native_w,
                    self.native_h,
                )
            })
            .collect()
    }
}

/// Run the proposal engine over a whole frame source.
pub fn propose_events(src: &dyn FrameSource, cfg: &MotionConfig) -> Result<VideoEvents> {
    if src.is_empty() {
        return Err(Error::InvalidInput("video has no frames".into()));
    }
    let first = src.frame(0)?;
    let (w, h) = (first.width(), first.height());
    let mut engine = ProposalEngine::new(cfg, w, h)?;
    engine.push_frame(&first)?;
    for i in 1..src.len() {
        engine.push_frame(&src.frame(i)?)?;
    }
    Ok(VideoEvents {
        video_id: String::new(),
        width: w,
        height: h,
        num_frames: src.len() as u32,
        events: engine.finish(),
    })
}
