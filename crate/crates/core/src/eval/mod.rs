//! Video-level evaluation with uncertainty-aware abstention.
//!
//! Event classifier outputs are pooled per video (maximum delivery
//! probability); a video is predicted a delivery when its score reaches the
//! decision threshold, and videos without proposals are non-deliveries. An
//! uncertainty cutoff calibrated on validation mistakes lets the system
//! abstain: events whose uncertainty exceeds the cutoff are dropped, and a
//! video abstains when every one of its events is dropped.

mod pr;

pub use pr::{average_precision, pr_curve, PrPoint};

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};

/// Binary confusion counts (positive class: delivery).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            return 0.0;
        }
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let p = self.precision();
        let r = self.recall();
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }

    /// False-positive rate: alarms raised on non-delivery videos.
    pub fn fpr(&self) -> f64 {
        ratio(self.fp, self.fp + self.tn)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Classifier output for one event proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventScore {
    pub video_id: String,
    pub event_id: u64,
    pub actual: Label,
    pub p_delivery: f64,
    /// Evidential uncertainty in [0, 1] (0.5 mass split for softmax heads).
    pub uncertainty: f64,
}

impl EventScore {
    /// Argmax prediction (ties go to non-delivery).
    pub fn predicted(&self) -> Label {
        if self.p_delivery > 0.5 {
            Label::Delivery
        } else {
            Label::NonDelivery
        }
    }

    pub fn correct(&self) -> bool {
        self.predicted() == self.actual
    }
}

/// Max-pool per-frame delivery scores into a chunk score — the aggregation
/// rule of frame-wise 2D baselines. Chunks with no scored frames (no person
/// detected) score 0.
pub fn baseline_maxpool(scores: &[f64]) -> f64 {
    scores.iter().fold(0.0f64, |acc, &s| acc.max(s))
}

/// Mean uncertainty over misclassified events — the abstention cutoff.
/// With no mistakes the cutoff is 1.0, so nothing abstains.
pub fn uncertainty_cutoff(val_events: &[EventScore]) -> f64 {
    let wrong: Vec<f64> =
        val_events.iter().filter(|e| !e.correct()).map(|e| e.uncertainty).collect();
    if wrong.is_empty() {
        1.0
    } else {
        wrong.iter().sum::<f64>() / wrong.len() as f64
    }
}

/// Pooled decision for one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoOutcome {
    pub video_id: String,
    pub actual: Label,
    /// Maximum delivery probability over retained events (0 with none).
    pub score: f64,
    pub predicted: Label,
    /// Every event exceeded the uncertainty cutoff.
    pub abstained: bool,
    pub num_events: usize,
    pub num_retained: usize,
}

/// Pool one video's event scores into a decision. Events with uncertainty
/// strictly above `u_cutoff` are dropped; a video with events but none
/// retained abstains. Videos without any events score 0.
pub fn assess_video(
    video_id: &str,
    actual: Label,
    events: &[EventScore],
    threshold: f64,
    u_cutoff: Option<f64>,
) -> VideoOutcome {
    let retained: Vec<&EventScore> = match u_cutoff {
        Some(u) => events.iter().filter(|e| e.uncertainty <= u).collect(),
        None => events.iter().collect(),
    };
    let abstained = !events.is_empty() && retained.is_empty();
    let score = retained.iter().map(|e| e.p_delivery).fold(0.0f64, f64::max);
    let predicted = if !abstained && score >= threshold {
        Label::Delivery
    } else {
        Label::NonDelivery
    };
    VideoOutcome {
        video_id: video_id.to_string(),
        actual,
        score,
        predicted,
        abstained,
        num_events: events.len(),
        num_retained: retained.len(),
    }
}

/// Aggregate metrics over non-abstained videos.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMetrics {
    pub threshold: f64,
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub average_precision: f64,
    pub best_f1: f64,
    pub best_f1_threshold: f64,
    pub total_videos: usize,
    pub abstained_videos: usize,
}

/// Best F1 over thresholds taken from the achieved scores; among ties the
/// lowest threshold wins.
pub fn best_f1_over_thresholds(scored: &[(f64, bool)]) -> (f64, f64) {
    let mut thresholds: Vec<f64> = scored.iter().map(|(s, _)| *s).collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
    thresholds.dedup();
    let mut best = (0.0f64, 0.0f64); // (threshold, f1)
    for &t in &thresholds {
        let mut c = ConfusionCounts::default();
        for &(s, y) in scored {
            c.add(s >= t, y);
        }
        let f1 = c.f1();
        if f1 > best.1 {
            best = (t, f1);
        }
    }
    (best.0, best.1)
}

/// Score the pooled video decisions. Abstained videos are excluded from
/// the confusion and ranking metrics but reported in the counts.
pub fn video_metrics(outcomes: &[VideoOutcome], threshold: f64) -> Result<VideoMetrics> {
    let scored_outcomes: Vec<&VideoOutcome> =
        outcomes.iter().filter(|o| !o.abstained).collect();
    if scored_outcomes.is_empty() {
        return Err(Error::InvalidInput("all videos abstained".into()));
    }
    let mut counts = ConfusionCounts::default();
    let mut scored: Vec<(f64, bool)> = Vec::with_capacity(scored_outcomes.len());
    for o in &scored_outcomes {
        counts.add(o.predicted.is_delivery(), o.actual.is_delivery());
        scored.push((o.score, o.actual.is_delivery()));
    }
    let average_precision = average_precision(&scored)?;
    let (best_f1_threshold, best_f1) = best_f1_over_thresholds(&scored);
    Ok(VideoMetrics {
        threshold,
        counts,
        accuracy: counts.accuracy(),
        precision: counts.precision(),
        recall: counts.recall(),
        f1: counts.f1(),
        fpr: counts.fpr(),
        average_precision,
        best_f1,
        best_f1_threshold,
        total_videos: outcomes.len(),
        abstained_videos: outcomes.len() - scored_outcomes.len(),
    })
}

/// Event-level metrics: confusion over retained events plus the
/// accuracy-versus-uncertainty score over all events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMetrics {
    pub total: usize,
    pub retained: usize,
    pub abstained: usize,
    /// Confusion of argmax predictions over retained events.
    pub counts: ConfusionCounts,
    /// Accuracy over retained events.
    pub accuracy: f64,
    pub mean_uncertainty: f64,
    /// `(accurate-certain + inaccurate-uncertain) / total`, certain meaning
    /// `u <= avu_threshold`; computed over all events.
    pub avu: f64,
    pub avu_threshold: f64,
}

/// Score events individually. `u_cutoff` drops events with uncertainty
/// strictly above it from the confusion counts (they are tallied as
/// abstained); the AvU score always sees every event.
pub fn event_metrics(
    events: &[EventScore],
    u_cutoff: Option<f64>,
    avu_threshold: f64,
) -> EventMetrics {
    let mut counts = ConfusionCounts::default();
    let mut retained = 0usize;
    let mut u_sum = 0.0f64;
    let mut avu_hits = 0usize;
    for e in events {
        u_sum += e.uncertainty;
        let certain = e.uncertainty <= avu_threshold;
        if e.correct() == certain {
            avu_hits += 1;
        }
        if u_cutoff.is_none_or(|u| e.uncertainty <= u) {
            retained += 1;
            counts.add(e.predicted().is_delivery(), e.actual.is_delivery());
        }
    }
    let total = events.len();
    EventMetrics {
        total,
        retained,
        abstained: total - retained,
        counts,
        accuracy: counts.accuracy(),
        mean_uncertainty: if total == 0 { 0.0 } else { u_sum / total as f64 },
        avu: if total == 0 { 0.0 } else { avu_hits as f64 / total as f64 },
        avu_threshold,
    }
}

/// One video's ground truth and scored events, ready for aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredVideo {
    pub video_id: String,
    pub actual: Label,
    pub events: Vec<EventScore>,
}

/// The full evaluation report written by the CLI: headline numbers at the
/// top, per-level detail and the PR curve below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    /// Video decision threshold on the pooled delivery score.
    pub threshold: f64,
    /// Abstention cutoff in force (`null` = filtering off).
    pub uncertainty_cutoff: Option<f64>,
    pub f1: f64,
    /// Area under the video-level precision-recall curve.
    pub map: f64,
    pub fpr: f64,
    pub accuracy_pct: f64,
    pub avu: f64,
    pub counts: ConfusionCounts,
    pub abstained_videos: usize,
    pub abstained_events: usize,
    pub event: EventMetrics,
    pub video: VideoMetrics,
    /// Video-level PR points over non-abstained videos.
    pub pr_curve: Vec<PrPoint>,
    pub outcomes: Vec<VideoOutcome>,
}

pub const METRICS_SCHEMA_VERSION: u32 = 1;

/// Aggregate scored videos into the full report.
pub fn evaluate_videos(
    videos: &[ScoredVideo],
    threshold: f64,
    u_cutoff: Option<f64>,
    avu_threshold: f64,
) -> Result<MetricsReport> {
    if videos.is_empty() {
        return Err(Error::InvalidInput("no videos to evaluate".into()));
    }
    let outcomes: Vec<VideoOutcome> = videos
        .iter()
        .map(|v| assess_video(&v.video_id, v.actual, &v.events, threshold, u_cutoff))
        .collect();
    let all_events: Vec<EventScore> =
        videos.iter().flat_map(|v| v.events.iter().cloned()).collect();
    let event = event_metrics(&all_events, u_cutoff, avu_threshold);
    let video = video_metrics(&outcomes, threshold)?;
    let scored: Vec<(f64, bool)> = outcomes
        .iter()
        .filter(|o| !o.abstained)
        .map(|o| (o.score, o.actual.is_delivery()))
        .collect();
    let pr_curve = pr_curve(&scored)?;
    Ok(MetricsReport {
        schema_version: METRICS_SCHEMA_VERSION,
        threshold,
        uncertainty_cutoff: u_cutoff,
        f1: video.f1,
        map: video.average_precision,
        fpr: video.fpr,
        accuracy_pct: 100.0 * video.accuracy,
        avu: event.avu,
        counts: video.counts,
        abstained_videos: video.abstained_videos,
        abstained_events: event.abstained,
        event,
        video,
        pr_curve,
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn es(p: f64, u: f64, actual: Label) -> EventScore {
        EventScore {
            video_id: "v".into(),
            event_id: 0,
            actual,
            p_delivery: p,
            uncertainty: u,
        }
    }

    #[test]
    fn f1_matches_hand_computation() {
        // precision 0.8 (328/410), recall 0.82 (328/400).
        let c = ConfusionCounts { tp: 328, fp: 82, tn: 500, fn_: 72 };
        assert!((c.precision() - 0.8).abs() < 1e-12);
        assert!((c.recall() - 0.82).abs() < 1e-12);
        let expect = 2.0 * 0.8 * 0.82 / (0.8 + 0.82);
        assert!((c.f1() - expect).abs() < 1e-12);
        assert!((c.f1() - 0.80987654).abs() < 1e-8);
    }

    #[test]
    fn fpr_counts_false_alarms_over_negatives() {
        let c = ConfusionCounts { tp: 40, fp: 13, tn: 87, fn_: 10 };
        assert!((c.fpr() - 0.13).abs() < 1e-12);
        let empty = ConfusionCounts::default();
        assert_eq!(empty.fpr(), 0.0);
        assert_eq!(empty.f1(), 0.0);
        assert_eq!(empty.accuracy(), 0.0);
    }

    #[test]
    fn cutoff_is_mean_uncertainty_of_mistakes() {
        let events = vec![
            es(0.9, 0.05, Label::Delivery),     // correct
            es(0.2, 0.12, Label::Delivery),     // wrong
            es(0.8, 0.20, Label::NonDelivery),  // wrong
            es(0.1, 0.40, Label::NonDelivery),  // correct
        ];
        assert!((uncertainty_cutoff(&events) - 0.16).abs() < 1e-12);
    }

    #[test]
    fn cutoff_without_mistakes_disables_abstention() {
        let events = vec![es(0.9, 0.9, Label::Delivery)];
        assert_eq!(uncertainty_cutoff(&events), 1.0);
    }

    #[test]
    fn tie_probability_predicts_non_delivery() {
        assert_eq!(es(0.5, 0.1, Label::Delivery).predicted(), Label::NonDelivery);
        assert_eq!(es(0.50001, 0.1, Label::Delivery).predicted(), Label::Delivery);
    }

    #[test]
    fn video_pooling_takes_max_probability() {
        let events =
            vec![es(0.3, 0.1, Label::Delivery), es(0.7, 0.1, Label::Delivery)];
        let o = assess_video("v", Label::Delivery, &events, 0.5, None);
        assert_eq!(o.score, 0.7);
        assert_eq!(o.predicted, Label::Delivery);
        assert!(!o.abstained);
    }

    #[test]
    fn zero_event_video_is_non_delivery_not_abstained() {
        let o = assess_video("v", Label::Delivery, &[], 0.5, Some(0.1));
        assert_eq!(o.predicted, Label::NonDelivery);
        assert!(!o.abstained);
        assert_eq!(o.score, 0.0);
    }

    #[test]
    fn abstention_is_strict_and_requires_all_events() {
        let events =
            vec![es(0.9, 0.30, Label::Delivery), es(0.6, 0.10, Label::Delivery)];
        // Cutoff exactly at an event's uncertainty keeps that event.
        let o = assess_video("v", Label::Delivery, &events, 0.5, Some(0.30));
        assert!(!o.abstained);
        assert_eq!(o.num_retained, 2);
        // Cutoff below both: everything dropped, video abstains.
        let o2 = assess_video("v", Label::Delivery, &events, 0.5, Some(0.05));
        assert!(o2.abstained);
        assert_eq!(o2.predicted, Label::NonDelivery);
        // Cutoff between: one event retained, its score decides.
        let o3 = assess_video("v", Label::Delivery, &events, 0.5, Some(0.15));
        assert!(!o3.abstained);
        assert_eq!(o3.num_retained, 1);
        assert_eq!(o3.score, 0.6);
    }

    #[test]
    fn threshold_is_inclusive_for_video_decision() {
        let events = vec![es(0.5, 0.1, Label::Delivery)];
        let o = assess_video("v", Label::Delivery, &events, 0.5, None);
        assert_eq!(o.predicted, Label::Delivery, "score == threshold is a delivery");
    }

    fn outcome(id: &str, actual: Label, score: f64) -> VideoOutcome {
        VideoOutcome {
            video_id: id.into(),
            actual,
            score,
            predicted: if score >= 0.5 { Label::Delivery } else { Label::NonDelivery },
            abstained: false,
            num_events: 1,
            num_retained: 1,
        }
    }

    #[test]
    fn metrics_aggregate_and_exclude_abstained() {
        let mut outcomes = vec![
            outcome("a", Label::Delivery, 0.9),
            outcome("b", Label::Delivery, 0.3),
            outcome("c", Label::NonDelivery, 0.1),
            outcome("d", Label::NonDelivery, 0.8),
        ];
        outcomes.push(VideoOutcome {
            video_id: "e".into(),
            actual: Label::Delivery,
            score: 0.0,
            predicted: Label::NonDelivery,
            abstained: true,
            num_events: 2,
            num_retained: 0,
        });
        let m = video_metrics(&outcomes, 0.5).unwrap();
        assert_eq!(m.counts, ConfusionCounts { tp: 1, fp: 1, tn: 1, fn_: 1 });
        assert_eq!(m.abstained_videos, 1);
        assert_eq!(m.total_videos, 5);
        assert!((m.accuracy - 0.5).abs() < 1e-12);
        // Best threshold 0.3: a and b true positive, d false positive,
        // precision 2/3 at full recall -> F1 = 0.8.
        assert!((m.best_f1 - 0.8).abs() < 1e-12);
        assert_eq!(m.best_f1_threshold, 0.3);
    }

    #[test]
    fn single_class_ground_truth_errors() {
        let outcomes = vec![
            outcome("a", Label::Delivery, 0.9),
            outcome("b", Label::Delivery, 0.2),
        ];
        assert!(matches!(
            video_metrics(&outcomes, 0.5).unwrap_err(),
            Error::SingleClass(_)
        ));
    }

    #[test]
    fn maxpool_takes_largest_score_and_defaults_to_zero() {
        assert_eq!(baseline_maxpool(&[0.1, 0.9, 0.4]), 0.9);
        assert_eq!(baseline_maxpool(&[]), 0.0);
        assert_eq!(baseline_maxpool(&[0.4, 0.4, 0.4]), 0.4);
        // Matches plain max exactly on any non-empty input.
        let scores = [0.123456, 0.999999, 0.5];
        let max = scores.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(baseline_maxpool(&scores), max);
    }

    #[test]
    fn event_metrics_count_avu_over_all_and_confusion_over_retained() {
        let events = vec![
            es(0.9, 0.10, Label::Delivery),    // correct, certain   -> AvU hit
            es(0.2, 0.80, Label::Delivery),    // wrong, uncertain   -> AvU hit
            es(0.8, 0.60, Label::NonDelivery), // wrong, uncertain   -> AvU hit
            es(0.1, 0.90, Label::NonDelivery), // correct, uncertain -> miss
        ];
        let m = event_metrics(&events, Some(0.7), 0.5);
        assert_eq!(m.total, 4);
        assert_eq!(m.retained, 2); // u <= 0.7 keeps 0.10 and 0.60
        assert_eq!(m.abstained, 2);
        assert_eq!(m.counts, ConfusionCounts { tp: 1, fp: 1, tn: 0, fn_: 0 });
        assert!((m.accuracy - 0.5).abs() < 1e-12);
        assert!((m.avu - 0.75).abs() < 1e-12);
        assert!((m.mean_uncertainty - 0.6).abs() < 1e-12);
    }

    #[test]
    fn event_metrics_without_cutoff_retain_everything() {
        let events = vec![es(0.9, 0.99, Label::Delivery)];
        let m = event_metrics(&events, None, 0.5);
        assert_eq!(m.retained, 1);
        assert_eq!(m.abstained, 0);
        let empty = event_metrics(&[], None, 0.5);
        assert_eq!(empty.total, 0);
        assert_eq!(empty.avu, 0.0);
        assert_eq!(empty.mean_uncertainty, 0.0);
    }

    fn sv(id: &str, actual: Label, events: Vec<EventScore>) -> ScoredVideo {
        ScoredVideo { video_id: id.into(), actual, events }
    }

    #[test]
    fn report_aggregates_video_and_event_levels() {
        let videos = vec![
            sv("a", Label::Delivery, vec![es(0.9, 0.1, Label::Delivery)]),
            sv("b", Label::Delivery, vec![es(0.3, 0.2, Label::Delivery)]),
            sv("c", Label::NonDelivery, vec![es(0.1, 0.1, Label::NonDelivery)]),
            sv("d", Label::NonDelivery, vec![es(0.8, 0.2, Label::NonDelivery)]),
        ];
        let r = evaluate_videos(&videos, 0.5, None, 0.5).unwrap();
        assert_eq!(r.schema_version, METRICS_SCHEMA_VERSION);
        assert_eq!(r.counts, ConfusionCounts { tp: 1, fp: 1, tn: 1, fn_: 1 });
        assert!((r.accuracy_pct - 50.0).abs() < 1e-12);
        assert_eq!(r.abstained_videos, 0);
        assert_eq!(r.abstained_events, 0);
        assert_eq!(r.event.total, 4);
        // Events: predictions delivery/non/non/delivery vs actual
        // delivery/delivery/non/non -> 2 correct; all certain at u <= 0.5.
        assert!((r.avu - 0.5).abs() < 1e-12);
        assert!(!r.pr_curve.is_empty());
        assert_eq!(r.outcomes.len(), 4);
        assert_eq!(r.f1, r.video.f1);
        assert_eq!(r.map, r.video.average_precision);
        assert_eq!(r.uncertainty_cutoff, None);
    }

    #[test]
    fn report_applies_abstention_cutoff_at_both_levels() {
        let videos = vec![
            sv("a", Label::Delivery, vec![es(0.9, 0.9, Label::Delivery)]),
            sv("b", Label::Delivery, vec![es(0.8, 0.1, Label::Delivery)]),
            sv("c", Label::NonDelivery, vec![es(0.2, 0.1, Label::NonDelivery)]),
        ];
        let r = evaluate_videos(&videos, 0.5, Some(0.5), 0.5).unwrap();
        assert_eq!(r.abstained_videos, 1);
        assert_eq!(r.abstained_events, 1);
        assert_eq!(r.event.retained, 2);
        assert_eq!(r.counts, ConfusionCounts { tp: 1, fp: 0, tn: 1, fn_: 0 });
        assert_eq!(r.uncertainty_cutoff, Some(0.5));
    }

    #[test]
    fn report_rejects_empty_input() {
        assert!(matches!(
            evaluate_videos(&[], 0.5, None, 0.5).unwrap_err(),
            Error::InvalidInput(_)
        ));
    }
}
