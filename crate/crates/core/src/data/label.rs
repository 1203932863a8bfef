//! Automatic labeling of motion proposals against ground-truth tracks.
//!
//! A proposal matches a subject track when their frame ranges overlap with
//! IoU at least `temporal_iou_min` and the proposal region overlaps the
//! track's union box over the shared frames with IoU at least
//! `spatial_iou_min`. A proposal is a delivery when any matched track is
//! tagged delivery; unmatched proposals are non-deliveries.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::LabelingConfig;
use crate::error::{Error, Result};
use crate::geometry::{BoxPx, FrameInterval};
use crate::motion::{MotionEvent, VideoEvents};

use super::annotation::{Label, VideoAnnotation};

/// A motion proposal with its resolved training label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledEvent {
    pub video_id: String,
    pub camera_id: String,
    pub event_id: u64,
    pub start_frame: u32,
    pub end_frame: u32,
    pub roi: BoxPx,
    pub thumbnail: BoxPx,
    pub label: Label,
    /// Ids of ground-truth tracks this proposal matched, ascending.
    pub matched_track_ids: Vec<u64>,
}

/// Labeled proposals for a corpus, ordered by (video id, event id).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelsFile {
    pub schema_version: u32,
    pub events: Vec<LabeledEvent>,
}

impl LabelsFile {
    pub const SCHEMA_VERSION: u32 = 1;

    pub fn new(mut events: Vec<LabeledEvent>) -> Self {
        events.sort_by(|a, b| {
            a.video_id.cmp(&b.video_id).then(a.event_id.cmp(&b.event_id))
        });
        LabelsFile { schema_version: Self::SCHEMA_VERSION, events }
    }

    pub fn load(path: &Path) -> Result<LabelsFile> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                Error::MissingArtifact(format!("labels {}", path.display()))
            }
            _ => Error::io(path, e),
        })?;
        let f: LabelsFile = serde_json::from_str(&text)?;
        if f.schema_version != Self::SCHEMA_VERSION {
            return Err(Error::Decode(format!(
                "{}: unsupported labels schema {}",
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

/// Label one proposal against the video's annotated tracks.
pub fn label_event(
    event: &MotionEvent,
    ann: &VideoAnnotation,
    cfg: &LabelingConfig,
) -> (Label, Vec<u64>) {
    let ev_int = FrameInterval::new(event.start_frame, event.end_frame);
    let mut matched = Vec::new();
    let mut delivery = false;
    for track in &ann.tracks {
        let Some(tr_int) = track.frame_interval() else { continue };
        if ev_int.iou(&tr_int) < cfg.temporal_iou_min {
            continue;
        }
        let overlap = FrameInterval::new(
            ev_int.start.max(tr_int.start),
            ev_int.end.min(tr_int.end),
        );
        let Some(union_box) = track.union_box_over(overlap) else { continue };
        if event.roi.iou(&union_box) < cfg.spatial_iou_min {
            continue;
        }
        matched.push(track.id);
        delivery |= track.tag.is_delivery();
    }
    matched.sort_unstable();
    (if delivery { Label::Delivery } else { Label::NonDelivery }, matched)
}

/// Label every proposal of one video against that video's annotation.
pub fn label_corpus(
    events: &VideoEvents,
    ann: &VideoAnnotation,
    cfg: &LabelingConfig,
) -> Result<Vec<LabeledEvent>> {
    if events.video_id != ann.video_id {
        return Err(Error::InvalidInput(format!(
            "events for {} labeled against annotation for {}",
            events.video_id, ann.video_id
        )));
    }
    Ok(events
        .events
        .iter()
        .map(|ev| {
            let (label, matched_track_ids) = label_event(ev, ann, cfg);
            LabeledEvent {
                video_id: events.video_id.clone(),
                camera_id: ann.camera_id.clone(),
                event_id: ev.id,
                start_frame: ev.start_frame,
                end_frame: ev.end_frame,
                roi: ev.roi,
                thumbnail: ev.thumbnail,
                label,
                matched_track_ids,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::annotation::SubjectTrack;
    use std::collections::BTreeMap;

    fn event(start: u32, end: u32, roi: BoxPx) -> MotionEvent {
        MotionEvent {
            id: 0,
            start_frame: start,
            end_frame: end,
            roi,
            thumbnail: roi,
            active_frames: end - start + 1,
            centroid_variance: 500.0,
        }
    }

    fn track_span(id: u64, tag: Label, start: u32, end: u32, b: BoxPx) -> SubjectTrack {
        let boxes = (start..=end).map(|f| (f, b)).collect();
        SubjectTrack { id, tag, boxes }
    }

    fn ann(tracks: Vec<SubjectTrack>) -> VideoAnnotation {
        VideoAnnotation {
            schema_version: 1,
            video_id: "v".into(),
            camera_id: "c".into(),
            width: 320,
            height: 240,
            num_frames: 120,
            fps: 10,
            video_tag: Label::Delivery,
            tracks,
            activities: vec![],
        }
    }

    fn cfg() -> LabelingConfig {
        LabelingConfig::default()
    }

    #[test]
    fn overlapping_delivery_track_labels_delivery() {
        let b = BoxPx::new(10, 10, 60, 110);
        let a = ann(vec![track_span(7, Label::Delivery, 0, 50, b)]);
        let ev = event(10, 45, BoxPx::new(12, 12, 58, 100));
        let (label, matched) = label_event(&ev, &a, &cfg());
        assert_eq!(label, Label::Delivery);
        assert_eq!(matched, vec![7]);
    }

    #[test]
    fn low_temporal_overlap_fails_to_match() {
        // Track [0,10], event [50,100]: no temporal overlap at all.
        let b = BoxPx::new(10, 10, 60, 110);
        let a = ann(vec![track_span(0, Label::Delivery, 0, 10, b)]);
        let ev = event(50, 100, b);
        let (label, matched) = label_event(&ev, &a, &cfg());
        assert_eq!(label, Label::NonDelivery);
        assert!(matched.is_empty());
    }

    #[test]
    fn temporal_iou_threshold_is_inclusive() {
        // Track [0,10] (11 frames), event [0,54] (55 frames): IoU = 11/55 = 0.2.
        let b = BoxPx::new(10, 10, 60, 110);
        let a = ann(vec![track_span(0, Label::Delivery, 0, 10, b)]);
        let ev = event(0, 54, b);
        let (label, matched) = label_event(&ev, &a, &cfg());
        assert_eq!(label, Label::Delivery, "IoU exactly at threshold must match");
        assert_eq!(matched, vec![0]);
        // One frame longer drops below the threshold.
        let ev2 = event(0, 55, b);
        let (label2, _) = label_event(&ev2, &a, &cfg());
        assert_eq!(label2, Label::NonDelivery);
    }

    #[test]
    fn low_spatial_overlap_fails_to_match() {
        // Same frames, disjoint regions.
        let a = ann(vec![track_span(0, Label::Delivery, 0, 50, BoxPx::new(0, 0, 20, 20))]);
        let ev = event(0, 50, BoxPx::new(200, 200, 240, 240));
        let (label, matched) = label_event(&ev, &a, &cfg());
        assert_eq!(label, Label::NonDelivery);
        assert!(matched.is_empty());
    }

    #[test]
    fn spatial_iou_uses_union_over_shared_frames_only() {
        // The track wanders far away outside the event's frame range; only
        // boxes inside the shared range count towards the union.
        let mut boxes = BTreeMap::new();
        boxes.insert(0, BoxPx::new(0, 0, 40, 80));
        boxes.insert(30, BoxPx::new(10, 0, 50, 80));
        boxes.insert(90, BoxPx::new(280, 160, 320, 240)); // outside event range
        let tr = SubjectTrack { id: 1, tag: Label::Delivery, boxes };
        let a = ann(vec![tr]);
        let ev = event(0, 40, BoxPx::new(0, 0, 50, 80));
        let (label, matched) = label_event(&ev, &a, &cfg());
        // Temporal IoU: [0,40] vs [0,90] = 41/91 > 0.2; union over [0,40]
        // is (0,0,50,80) which equals the roi.
        assert_eq!(label, Label::Delivery);
        assert_eq!(matched, vec![1]);
    }

    #[test]
    fn non_delivery_track_matches_without_delivery_label() {
        let b = BoxPx::new(10, 10, 60, 110);
        let a = ann(vec![track_span(3, Label::NonDelivery, 0, 50, b)]);
        let ev = event(5, 45, b);
        let (label, matched) = label_event(&ev, &a, &cfg());
        assert_eq!(label, Label::NonDelivery);
        assert_eq!(matched, vec![3]);
    }

    #[test]
    fn any_delivery_among_matches_wins() {
        let b = BoxPx::new(10, 10, 60, 110);
        let a = ann(vec![
            track_span(5, Label::NonDelivery, 0, 50, b),
            track_span(2, Label::Delivery, 0, 50, b),
        ]);
        let ev = event(0, 50, b);
        let (label, matched) = label_event(&ev, &a, &cfg());
        assert_eq!(label, Label::Delivery);
        assert_eq!(matched, vec![2, 5], "matched ids are sorted");
    }

    #[test]
    fn labels_file_sorts_and_round_trips() {
        let mk = |vid: &str, eid: u64| LabeledEvent {
            video_id: vid.into(),
            camera_id: "c".into(),
            event_id: eid,
            start_frame: 0,
            end_frame: 10,
            roi: BoxPx::new(0, 0, 10, 10),
            thumbnail: BoxPx::new(0, 0, 224, 224),
            label: Label::Delivery,
            matched_track_ids: vec![],
        };
        let f = LabelsFile::new(vec![mk("b", 1), mk("a", 1), mk("b", 0)]);
        let order: Vec<(String, u64)> =
            f.events.iter().map(|e| (e.video_id.clone(), e.event_id)).collect();
        assert_eq!(order, [("a".into(), 1), ("b".into(), 0), ("b".into(), 1)]);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.json");
        f.save(&path).unwrap();
        assert_eq!(LabelsFile::load(&path).unwrap(), f);
        assert!(matches!(
            LabelsFile::load(&dir.path().join("missing.json")).unwrap_err(),
            Error::MissingArtifact(_)
        ));
    }

    #[test]
    fn corpus_labeling_rejects_video_mismatch() {
        let a = ann(vec![]);
        let ve = VideoEvents {
            video_id: "other".into(),
            width: 320,
            height: 240,
            num_frames: 120,
            events: vec![],
        };
        assert!(label_corpus(&ve, &a, &cfg()).is_err());
    }
}
