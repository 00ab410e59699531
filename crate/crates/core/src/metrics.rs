//! Localization, energy-estimation and detection scores.
//!
//! Undefined ratios follow one convention: precision, recall and F1 are 0
//! when their denominator is 0, and the matching ratio is 1 when both series
//! are identically zero.

use serde::{Deserialize, Serialize};

use crate::dataproc::PowerSeries;
use crate::error::{shape_err, validation_err, Result};
use crate::localizer::{PowerEstimate, StatusSeries};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn from_labels(pred: &[u8], truth: &[u8]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(shape_err!("{} predictions for {} ground-truth values", pred.len(), truth.len()));
        }
        let mut c = Self::default();
        for (&p, &t) in pred.iter().zip(truth) {
            match (p != 0, t != 0) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self { tp: self.tp + other.tp, fp: self.fp + other.fp, tn: self.tn + other.tn, fn_: self.fn_ + other.fn_ }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatusScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
}

impl StatusScores {
    pub fn from_counts(counts: ConfusionCounts) -> Self {
        let precision = ratio(counts.tp, counts.tp + counts.fp);
        let recall = ratio(counts.tp, counts.tp + counts.fn_);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Self { precision, recall, f1, counts }
    }
}

/// Scores for the ON class over aligned per-timestamp labels.
pub fn status_scores(pred: &StatusSeries, truth: &StatusSeries) -> Result<StatusScores> {
    status_scores_slices(&pred.values, &truth.values)
}

pub fn status_scores_slices(pred: &[u8], truth: &[u8]) -> Result<StatusScores> {
    Ok(StatusScores::from_counts(ConfusionCounts::from_labels(pred, truth)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyScores {
    pub mae: f64,
    pub rmse: f64,
    pub matching_ratio: f64,
}

pub fn energy_scores(pred: &PowerEstimate, truth: &PowerSeries) -> Result<EnergyScores> {
    energy_scores_slices(&pred.values, &truth.values)
}

/// MAE, RMSE and `MR = Σ min(ŷ, y) / Σ max(ŷ, y)` in Watts.
pub fn energy_scores_slices(pred: &[f64], truth: &[f64]) -> Result<EnergyScores> {
    if pred.len() != truth.len() {
        return Err(shape_err!("{} estimates for {} ground-truth values", pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(validation_err!("energy scores need at least one value"));
    }
    if let Some(bad) = pred.iter().chain(truth).find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(validation_err!("power values must be finite and non-negative, found {bad}"));
    }
    let (mut abs, mut sq, mut lo, mut hi) = (0.0, 0.0, 0.0, 0.0);
    for (&p, &y) in pred.iter().zip(truth) {
        let d = p - y;
        abs += d.abs();
        sq += d * d;
        lo += p.min(y);
        hi += p.max(y);
    }
    let n = pred.len() as f64;
    Ok(EnergyScores { mae: abs / n, rmse: (sq / n).sqrt(), matching_ratio: if hi == 0.0 { 1.0 } else { lo / hi } })
}

/// `½ (TP/(TP+FN) + TN/(TN+FP))`; an empty class contributes 0.
pub fn balanced_accuracy(c: &ConfusionCounts) -> f64 {
    0.5 * (ratio(c.tp, c.tp + c.fn_) + ratio(c.tn, c.tn + c.fp))
}

/// Everything reported for one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// Window-level detection score.
    pub balanced_accuracy: f64,
    pub mae: f64,
    pub rmse: f64,
    pub matching_ratio: f64,
    /// Per-timestamp localization counts.
    pub counts: ConfusionCounts,
    /// Per-window detection counts.
    pub detection_counts: ConfusionCounts,
}

impl MetricsReport {
    pub fn new(status: StatusScores, energy: EnergyScores, detection: ConfusionCounts) -> Self {
        Self {
            f1: status.f1,
            precision: status.precision,
            recall: status.recall,
            balanced_accuracy: balanced_accuracy(&detection),
            mae: energy.mae,
            rmse: energy.rmse,
            matching_ratio: energy.matching_ratio,
            counts: status.counts,
            detection_counts: detection,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is plain data")
    }

    /// Aligned two-column table.
    pub fn to_table(&self) -> String {
        let rows: [(&str, String); 11] = [
            ("f1", format!("{:.4}", self.f1)),
            ("precision", format!("{:.4}", self.precision)),
            ("recall", format!("{:.4}", self.recall)),
            ("balanced_accuracy", format!("{:.4}", self.balanced_accuracy)),
            ("mae_w", format!("{:.2}", self.mae)),
            ("rmse_w", format!("{:.2}", self.rmse)),
            ("matching_ratio", format!("{:.4}", self.matching_ratio)),
            (
                "timestamps tp/fp/tn/fn",
                format!("{}/{}/{}/{}", self.counts.tp, self.counts.fp, self.counts.tn, self.counts.fn_),
            ),
            ("windows", self.detection_counts.total().to_string()),
            ("windows tp/fp", format!("{}/{}", self.detection_counts.tp, self.detection_counts.fp)),
            ("windows tn/fn", format!("{}/{}", self.detection_counts.tn, self.detection_counts.fn_)),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let vwidth = rows.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
        rows.iter().map(|(k, v)| format!("{k:<width$}  {v:>vwidth$}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn status_hand_cases() {
        let s = status_scores_slices(&[1, 0, 1], &[1, 0, 1]).unwrap();
        assert_eq!(s.f1, 1.0);
        let s = status_scores_slices(&[0, 0, 0], &[1, 0, 1]).unwrap();
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        let s = StatusScores::from_counts(ConfusionCounts { tp: 2, fp: 1, tn: 0, fn_: 1 });
        assert!((s.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.recall - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!(status_scores_slices(&[1], &[1, 0]).is_err());
    }

    #[test]
    fn energy_hand_cases() {
        let e = energy_scores_slices(&[0.0, 800.0, 400.0], &[0.0, 800.0, 800.0]).unwrap();
        assert_eq!(e.matching_ratio, 0.75);
        let e = energy_scores_slices(&[5.0, 7.0], &[5.0, 7.0]).unwrap();
        assert_eq!((e.matching_ratio, e.mae, e.rmse), (1.0, 0.0, 0.0));
        assert_eq!(energy_scores_slices(&[0.0, 0.0], &[3.0, 1.0]).unwrap().matching_ratio, 0.0);
        assert_eq!(energy_scores_slices(&[0.0], &[0.0]).unwrap().matching_ratio, 1.0);
        assert!(energy_scores_slices(&[-1.0], &[0.0]).is_err());
    }

    #[test]
    fn balanced_accuracy_hand_cases() {
        assert!((balanced_accuracy(&ConfusionCounts { tp: 8, fn_: 2, tn: 5, fp: 5 }) - 0.65).abs() < 1e-15);
        assert_eq!(balanced_accuracy(&ConfusionCounts { tp: 4, fn_: 0, tn: 6, fp: 0 }), 1.0);
        assert_eq!(balanced_accuracy(&ConfusionCounts { tp: 5, fn_: 0, tn: 0, fp: 5 }), 0.5);
    }

    #[test]
    fn table_lists_every_metric() {
        let r = MetricsReport::new(
            StatusScores::from_counts(ConfusionCounts { tp: 1, fp: 0, tn: 1, fn_: 0 }),
            EnergyScores { mae: 0.0, rmse: 0.0, matching_ratio: 1.0 },
            ConfusionCounts::default(),
        );
        let t = r.to_table();
        for key in ["f1", "precision", "recall", "balanced_accuracy", "mae_w", "rmse_w", "matching_ratio"] {
            assert!(t.contains(key));
        }
        let back: MetricsReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    proptest! {
        #[test]
        fn rmse_dominates_mae_and_mr_is_bounded(
            pairs in prop::collection::vec((0.0f64..3000.0, 0.0f64..3000.0), 1..100),
        ) {
            let (p, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let e = energy_scores_slices(&p, &y).unwrap();
            prop_assert!(e.rmse + 1e-9 >= e.mae);
            prop_assert!(e.matching_ratio <= 1.0);
        }

        #[test]
        fn f1_ignores_a_shared_permutation(
            pairs in prop::collection::vec((0u8..2, 0u8..2), 1..100),
            rot in 0usize..100,
        ) {
            let (p, t): (Vec<u8>, Vec<u8>) = pairs.iter().copied().unzip();
            let r = rot % p.len();
            let (mut p2, mut t2) = (p.clone(), t.clone());
            p2.rotate_left(r);
            t2.rotate_left(r);
            p2.reverse();
            t2.reverse();
            prop_assert_eq!(status_scores_slices(&p, &t).unwrap(), status_scores_slices(&p2, &t2).unwrap());
        }

        #[test]
        fn balanced_accuracy_is_symmetric_in_the_classes(tp in 0u64..50, fp in 0u64..50, tn in 0u64..50, fn_ in 0u64..50) {
            let a = balanced_accuracy(&ConfusionCounts { tp, fp, tn, fn_ });
            let b = balanced_accuracy(&ConfusionCounts { tp: tn, fp: fn_, tn: tp, fn_: fp });
            prop_assert_eq!(a, b);
        }
    }
}
