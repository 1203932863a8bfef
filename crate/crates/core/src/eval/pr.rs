//! Precision-recall curves and average precision.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One operating point; `threshold` is the lowest score still predicted
/// positive at this point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
}

fn check_scores(scored: &[(f64, bool)]) -> Result<(usize, usize)> {
    if scored.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::NonFinite("score".into()));
    }
    let pos = scored.iter().filter(|(_, y)| *y).count();
    let neg = scored.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass(format!(
            "precision-recall needs both classes, got {pos} positives / {neg} negatives"
        )));
    }
    Ok((pos, neg))
}

/// Operating points swept from the highest score down, with tied scores
/// grouped into a single point.
pub fn pr_curve(scored: &[(f64, bool)]) -> Result<Vec<PrPoint>> {
    let (pos, _) = check_scores(scored)?;
    let mut sorted: Vec<(f64, bool)> = scored.to_vec();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite scores"));

    let mut points = Vec::new();
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == score {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            threshold: score,
            precision: tp as f64 / (tp + fp) as f64,
            recall: tp as f64 / pos as f64,
        });
    }
    Ok(points)
}

/// Area under the precision envelope: at each achieved recall level the
/// precision is replaced by the best precision at that recall or higher,
/// then integrated over recall.
pub fn average_precision(scored: &[(f64, bool)]) -> Result<f64> {
    let points = pr_curve(scored)?;
    // Envelope from the right (highest recall backwards).
    let mut env = vec![0.0f64; points.len()];
    let mut best = 0.0f64;
    for (i, p) in points.iter().enumerate().rev() {
        best = best.max(p.precision);
        env[i] = best;
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, e) in points.iter().zip(&env) {
        ap += (p.recall - prev_recall) * e;
        prev_recall = p.recall;
    }
    Ok(ap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Quadratic reference: for every distinct score, recount the whole
    /// confusion from scratch, then integrate the envelope directly.
    fn ap_reference(scored: &[(f64, bool)]) -> f64 {
        let pos = scored.iter().filter(|(_, y)| *y).count();
        let mut thresholds: Vec<f64> = scored.iter().map(|(s, _)| *s).collect();
        thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
        thresholds.dedup();
        let mut pts: Vec<(f64, f64)> = Vec::new();
        for t in &thresholds {
            let mut tp = 0;
            let mut fp = 0;
            for &(s, y) in scored {
                if s >= *t {
                    if y {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            pts.push((tp as f64 / pos as f64, tp as f64 / (tp + fp) as f64));
        }
        let mut ap = 0.0;
        let mut prev_r = 0.0;
        for &(r, _) in &pts {
            let mut best = 0.0f64;
            for &(r2, p2) in &pts {
                if r2 >= r {
                    best = best.max(p2);
                }
            }
            ap += (r - prev_r) * best;
            prev_r = r;
        }
        ap
    }

    #[test]
    fn hand_computed_three_sample_case() {
        let scored = [(0.9, true), (0.8, false), (0.7, true)];
        let ap = average_precision(&scored).unwrap();
        // Points: (r=0.5, p=1), (0.5, 0.5), (1.0, 2/3); envelope keeps 1.0
        // at recall 0.5 and 2/3 at recall 1.0.
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn perfect_ranking_scores_one() {
        let scored = [(0.9, true), (0.8, true), (0.2, false), (0.1, false)];
        assert!((average_precision(&scored).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_scores_degrade_to_prevalence() {
        let scored: Vec<(f64, bool)> =
            (0..10).map(|i| (0.5, i < 3)).collect();
        let ap = average_precision(&scored).unwrap();
        assert!((ap - 0.3).abs() < 1e-12, "all-tied scores give prevalence");
    }

    #[test]
    fn worst_ranking_also_gives_prevalence() {
        let scored = [(0.9, false), (0.8, false), (0.1, true)];
        let ap = average_precision(&scored).unwrap();
        assert!((ap - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn tied_scores_are_grouped_into_one_point() {
        let scored = [(0.8, true), (0.8, false), (0.5, true)];
        let pts = pr_curve(&scored).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!((pts[0].recall, pts[0].precision), (0.5, 0.5));
        assert_eq!((pts[1].recall, pts[1].precision), (1.0, 2.0 / 3.0));
        let ap = average_precision(&scored).unwrap();
        assert!((ap - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn single_class_inputs_are_rejected() {
        let all_pos = [(0.9, true), (0.8, true)];
        assert!(matches!(average_precision(&all_pos).unwrap_err(), Error::SingleClass(_)));
        let all_neg = [(0.9, false)];
        assert!(matches!(pr_curve(&all_neg).unwrap_err(), Error::SingleClass(_)));
        let nan = [(f64::NAN, true), (0.5, false)];
        assert!(average_precision(&nan).is_err());
    }

    #[test]
    fn matches_quadratic_reference_on_fixed_cases() {
        let cases: Vec<Vec<(f64, bool)>> = vec![
            vec![(0.9, true), (0.8, false), (0.7, true), (0.6, false), (0.5, true)],
            vec![(0.4, true), (0.4, false), (0.4, true), (0.2, false)],
            vec![(1.0, false), (0.9, true), (0.9, true), (0.8, false), (0.7, false), (0.3, true)],
        ];
        for c in cases {
            let fast = average_precision(&c).unwrap();
            let slow = ap_reference(&c);
            assert!((fast - slow).abs() < 1e-12, "mismatch: {fast} vs {slow}");
        }
    }

    proptest! {
        #[test]
        fn envelope_ap_equals_reference(
            raw in proptest::collection::vec((0u8..=10, any::<bool>()), 2..40)
        ) {
            let scored: Vec<(f64, bool)> =
                raw.iter().map(|&(s, y)| (s as f64 / 10.0, y)).collect();
            let pos = scored.iter().filter(|(_, y)| *y).count();
            prop_assume!(pos > 0 && pos < scored.len());
            let fast = average_precision(&scored).unwrap();
            let slow = ap_reference(&scored);
            prop_assert!((fast - slow).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&fast));
        }
    }
}
