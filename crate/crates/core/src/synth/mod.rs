//! Deterministic synthetic-scene generator.
//!
//! Renders doorbell-style scenes — a static textured backdrop (wall, door,
//! walkway) with scripted sprite actors — so the whole pipeline can be
//! trained and tested without real footage. Everything is a pure function
//! of the master seed: backgrounds derive from the camera index, actor
//! parameters from the video index, and frames are encoded with a
//! deterministic JPEG encoder, so a corpus regenerates bit-identically.
//!
//! Four scenario kinds populate every pipeline branch:
//!
//! - `delivery`: a courier walks in carrying a package, stoops to set it
//!   down by the door, and retreats. The pause-low-then-leave profile (and
//!   the package) separates this class temporally, not just by appearance.
//! - `walk_by`: a pedestrian crosses the scene at a steady pace.
//! - `resident_exit`: an actor appears at the door, pauses, and walks away.
//! - `static_distractor`: a small blob that flickers and sways ±1 px. It
//!   yields real foreground blobs but its centroid variance stays far below
//!   the motion-event gate, so a correct proposal engine emits nothing.
//!
//! Ground-truth tracks are exact: the per-frame boxes are the rasterized
//! bounds of whatever sprite rectangles were drawn.

mod camera;
mod corpus;
mod scene;

pub use camera::CameraParams;
pub use corpus::{build_corpus, plan_scenarios, CorpusManifest, CORPUS_SCHEMA_VERSION};
pub use scene::{generate_scene, Scene, SceneSpec};

use serde::{Deserialize, Serialize};

use crate::data::Label;

/// The scripted scene types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Delivery,
    WalkBy,
    ResidentExit,
    StaticDistractor,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 4] = [
        ScenarioKind::Delivery,
        ScenarioKind::WalkBy,
        ScenarioKind::ResidentExit,
        ScenarioKind::StaticDistractor,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Delivery => "delivery",
            ScenarioKind::WalkBy => "walk_by",
            ScenarioKind::ResidentExit => "resident_exit",
            ScenarioKind::StaticDistractor => "static_distractor",
        }
    }

    /// Video-level label implied by the scenario.
    pub fn video_tag(self) -> Label {
        match self {
            ScenarioKind::Delivery => Label::Delivery,
            _ => Label::NonDelivery,
        }
    }
}

/// Deterministic weighted scenario sequence of length `n`: at every prefix
/// each kind's count stays within one of its weight quota (largest-deficit
/// rule, ties broken in declaration order). Kinds with weight 0 never occur.
pub fn scenario_sequence(n: usize, weights: [u32; 4]) -> Vec<ScenarioKind> {
    let total: u32 = weights.iter().sum();
    assert!(total > 0, "scenario weights must not all be zero");
    let mut counts = [0usize; 4];
    let mut seq = Vec::with_capacity(n);
    for g in 0..n {
        let mut pick = 0usize;
        let mut best = f64::NEG_INFINITY;
        for (s, &w) in weights.iter().enumerate() {
            if w == 0 {
                continue;
            }
            let deficit = (g + 1) as f64 * w as f64 / total as f64 - counts[s] as f64;
            if deficit > best {
                best = deficit;
                pick = s;
            }
        }
        counts[pick] += 1;
        seq.push(ScenarioKind::ALL[pick]);
    }
    seq
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequence_tracks_weight_quotas_at_every_prefix() {
        let weights = [3u32, 2, 2, 2];
        let seq = scenario_sequence(300, weights);
        let total: u32 = weights.iter().sum();
        let mut counts = [0usize; 4];
        for (g, kind) in seq.iter().enumerate() {
            let s = ScenarioKind::ALL.iter().position(|k| k == kind).unwrap();
            counts[s] += 1;
            for (i, &c) in counts.iter().enumerate() {
                let quota = (g + 1) as f64 * weights[i] as f64 / total as f64;
                assert!(
                    (c as f64 - quota).abs() < 1.0 + 1e-9,
                    "kind {i} count {c} vs quota {quota} after {} draws",
                    g + 1
                );
            }
        }
        // Exact totals for a length divisible by the weight sum.
        assert_eq!(counts, [100, 67, 67, 66]);
    }

    #[test]
    fn sequence_skips_zero_weight_kinds() {
        let seq = scenario_sequence(50, [1, 0, 0, 1]);
        assert!(seq
            .iter()
            .all(|k| matches!(k, ScenarioKind::Delivery | ScenarioKind::StaticDistractor)));
        let deliveries = seq.iter().filter(|k| **k == ScenarioKind::Delivery).count();
        assert_eq!(deliveries, 25);
    }

    #[test]
    fn scenario_names_round_trip_serde() {
        for kind in ScenarioKind::ALL {
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(json, format!("\"{}\"", kind.name()));
            let back: ScenarioKind = serde_json::from_str(&json).unwrap();
            assert_eq!(back, kind);
        }
        assert!(ScenarioKind::Delivery.video_tag().is_delivery());
        assert!(!ScenarioKind::WalkBy.video_tag().is_delivery());
    }
}
