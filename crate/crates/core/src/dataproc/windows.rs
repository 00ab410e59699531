use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, validation_err, Error, Result};
use crate::gradcore::seeded_rng;
use crate::localizer::StatusSeries;

use super::PowerSeries;

/// Divisor applied to Watts before windows reach a model.
pub const SCALE_W_PER_UNIT: f64 = 1000.0;

/// Non-overlapping windows with their weak (window-level) labels and,
/// when a sub-meter is available, the per-timestamp ground truth.
///
/// All per-timestamp arrays are flat, row-major `[n_windows × window_len]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowDataset {
    pub window_len: usize,
    /// Model input, `aggregate_w / 1000`.
    pub windows: Vec<f64>,
    /// Aggregate power in Watts.
    pub aggregate_w: Vec<f64>,
    pub weak_labels: Vec<u8>,
    pub strong_status: Option<Vec<u8>>,
    /// Appliance power in Watts; missing sub-meter readings are stored as 0.
    pub appliance_w: Option<Vec<f64>>,
    pub house_ids: Vec<String>,
    /// Epoch second of the first sample of each window.
    pub starts: Vec<i64>,
}

impl WindowDataset {
    pub fn empty(window_len: usize) -> Self {
        Self {
            window_len,
            windows: Vec::new(),
            aggregate_w: Vec::new(),
            weak_labels: Vec::new(),
            strong_status: None,
            appliance_w: None,
            house_ids: Vec::new(),
            starts: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.weak_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weak_labels.is_empty()
    }

    fn span(&self, i: usize) -> std::ops::Range<usize> {
        i * self.window_len..(i + 1) * self.window_len
    }

    pub fn window(&self, i: usize) -> &[f64] {
        &self.windows[self.span(i)]
    }

    pub fn aggregate(&self, i: usize) -> &[f64] {
        &self.aggregate_w[self.span(i)]
    }

    pub fn status(&self, i: usize) -> Option<&[u8]> {
        let span = self.span(i);
        self.strong_status.as_ref().map(|s| &s[span])
    }

    pub fn appliance(&self, i: usize) -> Option<&[f64]> {
        let span = self.span(i);
        self.appliance_w.as_ref().map(|s| &s[span])
    }

    /// `(negatives, positives)`.
    pub fn label_counts(&self) -> (usize, usize) {
        let pos = self.weak_labels.iter().filter(|&&l| l == 1).count();
        (self.len() - pos, pos)
    }

    /// Windows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut out = Self::empty(self.window_len);
        out.strong_status = self.strong_status.as_ref().map(|_| Vec::new());
        out.appliance_w = self.appliance_w.as_ref().map(|_| Vec::new());
        for &i in indices {
            out.windows.extend_from_slice(self.window(i));
            out.aggregate_w.extend_from_slice(self.aggregate(i));
            out.weak_labels.push(self.weak_labels[i]);
            if let (Some(dst), Some(src)) = (out.strong_status.as_mut(), self.status(i)) {
                dst.extend_from_slice(src);
            }
            if let (Some(dst), Some(src)) = (out.appliance_w.as_mut(), self.appliance(i)) {
                dst.extend_from_slice(src);
            }
            out.house_ids.push(self.house_ids[i].clone());
            out.starts.push(self.starts[i]);
        }
        out
    }

    /// Concatenates datasets with equal window length. Ground truth is kept
    /// only when every part has it.
    pub fn concat(parts: &[WindowDataset]) -> Result<Self> {
        let first = parts.first().ok_or_else(|| Error::EmptyInput("no datasets to concatenate".into()))?;
        let len = first.window_len;
        if let Some(bad) = parts.iter().find(|p| p.window_len != len) {
            return Err(shape_err!("window lengths differ: {} vs {}", bad.window_len, len));
        }
        let mut out = Self::empty(len);
        if parts.iter().all(|p| p.strong_status.is_some()) {
            out.strong_status = Some(parts.iter().flat_map(|p| p.strong_status.clone().unwrap()).collect());
        }
        if parts.iter().all(|p| p.appliance_w.is_some()) {
            out.appliance_w = Some(parts.iter().flat_map(|p| p.appliance_w.clone().unwrap()).collect());
        }
        for p in parts {
            out.windows.extend_from_slice(&p.windows);
            out.aggregate_w.extend_from_slice(&p.aggregate_w);
            out.weak_labels.extend_from_slice(&p.weak_labels);
            out.house_ids.extend(p.house_ids.iter().cloned());
            out.starts.extend_from_slice(&p.starts);
        }
        Ok(out)
    }

    /// Checks internal length consistency and label range.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let cells = n * self.window_len;
        if self.window_len == 0 {
            return Err(validation_err!("window length must be positive"));
        }
        if self.windows.len() != cells
            || self.aggregate_w.len() != cells
            || self.house_ids.len() != n
            || self.starts.len() != n
            || self.strong_status.as_ref().is_some_and(|s| s.len() != cells)
            || self.appliance_w.as_ref().is_some_and(|s| s.len() != cells)
        {
            return Err(shape_err!("inconsistent dataset arrays for {n} windows of length {}", self.window_len));
        }
        if self.weak_labels.iter().any(|&l| l > 1) {
            return Err(validation_err!("weak labels must be 0 or 1"));
        }
        Ok(())
    }
}

/// Splits a regular series into non-overlapping windows of `window_len`,
/// dropping any window that still contains a missing aggregate value.
/// The trailing partial window is dropped too. With a status series the
/// weak label is 1 iff any timestamp is ON; without one it is 0.
pub fn make_windows(
    aggregate: &PowerSeries,
    status: Option<&StatusSeries>,
    appliance: Option<&PowerSeries>,
    window_len: usize,
) -> Result<WindowDataset> {
    if window_len == 0 {
        return Err(validation_err!("window length must be positive"));
    }
    let n = aggregate.len();
    if let Some(s) = status {
        if s.len() != n {
            return Err(shape_err!("status has {} values, aggregate has {n}", s.len()));
        }
    }
    if let Some(a) = appliance {
        if a.len() != n {
            return Err(shape_err!("appliance series has {} values, aggregate has {n}", a.len()));
        }
    }
    let mut out = WindowDataset::empty(window_len);
    out.strong_status = status.map(|_| Vec::new());
    out.appliance_w = appliance.map(|_| Vec::new());
    for w in 0..n / window_len {
        let span = w * window_len..(w + 1) * window_len;
        let agg = &aggregate.values[span.clone()];
        if agg.iter().any(|v| v.is_nan()) {
            continue;
        }
        out.aggregate_w.extend_from_slice(agg);
        out.windows.extend(agg.iter().map(|v| v / SCALE_W_PER_UNIT));
        let label = match status {
            Some(s) => {
                let st = &s.values[span.clone()];
                out.strong_status.as_mut().unwrap().extend_from_slice(st);
                u8::from(st.contains(&1))
            }
            None => 0,
        };
        out.weak_labels.push(label);
        if let Some(a) = appliance {
            out.appliance_w
                .as_mut()
                .unwrap()
                .extend(a.values[span.clone()].iter().map(|v| if v.is_nan() { 0.0 } else { *v }));
        }
        out.house_ids.push(aggregate.house_id.clone());
        out.starts.push(aggregate.timestamps[span.start]);
    }
    Ok(out)
}

/// Windows of one house labelled with its possession flag: every window of a
/// house that owns the appliance is positive, every other window negative.
pub fn broadcast_possession_label(aggregate: &PowerSeries, owns: bool, window_len: usize) -> Result<WindowDataset> {
    let mut d = make_windows(aggregate, None, None, window_len)?;
    d.weak_labels.fill(u8::from(owns));
    Ok(d)
}

/// Randomly drops majority-class windows until both classes are equally
/// frequent. Kept windows retain their original order.
pub fn balance_undersample(data: &WindowDataset, seed: u64) -> Result<WindowDataset> {
    let (neg, pos): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| data.weak_labels[i] == 0);
    if neg.is_empty() || pos.is_empty() {
        return Err(validation_err!(
            "cannot balance a dataset with {} negative and {} positive windows",
            neg.len(),
            pos.len()
        ));
    }
    let (mut major, minor) = if neg.len() >= pos.len() { (neg, pos) } else { (pos, neg) };
    let mut rng = seeded_rng(seed);
    major.shuffle(&mut rng);
    major.truncate(minor.len());
    let mut keep: Vec<usize> = major.into_iter().chain(minor).collect();
    keep.sort_unstable();
    Ok(data.subset(&keep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn regular(values: Vec<f64>) -> PowerSeries {
        PowerSeries::regular("h1", 0, 60, values)
    }

    #[test]
    fn windows_are_scaled_and_weakly_labelled() {
        let agg = regular((0..10).map(|i| i as f64 * 100.0).collect());
        let status = StatusSeries::new(vec![0, 0, 0, 0, 0, 0, 1, 0, 0, 0], "a");
        let d = make_windows(&agg, Some(&status), None, 3).unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.weak_labels, vec![0, 0, 1]);
        assert_eq!(d.window(1), &[0.3, 0.4, 0.5]);
        assert_eq!(d.aggregate(1), &[300.0, 400.0, 500.0]);
        assert_eq!(d.starts, vec![0, 180, 360]);
        d.validate().unwrap();
    }

    #[test]
    fn windows_with_missing_values_are_dropped() {
        let mut v = vec![1.0; 6];
        v[4] = f64::NAN;
        let d = make_windows(&regular(v), None, None, 3).unwrap();
        assert_eq!(d.len(), 1);
        assert!(make_windows(&regular(vec![1.0]), None, None, 0).is_err());
    }

    #[test]
    fn possession_label_is_broadcast() {
        let d = broadcast_possession_label(&regular(vec![1.0; 9]), true, 3).unwrap();
        assert_eq!(d.weak_labels, vec![1, 1, 1]);
        let d = broadcast_possession_label(&regular(vec![1.0; 9]), false, 3).unwrap();
        assert_eq!(d.weak_labels, vec![0, 0, 0]);
    }

    #[test]
    fn balancing_needs_both_classes() {
        let d = broadcast_possession_label(&regular(vec![1.0; 9]), true, 3).unwrap();
        assert!(balance_undersample(&d, 0).is_err());
    }

    fn labelled(labels: &[u8]) -> WindowDataset {
        let mut d = broadcast_possession_label(&regular(vec![1.0; labels.len() * 2]), false, 2).unwrap();
        d.weak_labels = labels.to_vec();
        d
    }

    proptest! {
        #[test]
        fn balancing_equalizes_the_classes(
            labels in prop::collection::vec(0u8..2, 2..80),
            seed in any::<u64>(),
        ) {
            let d = labelled(&labels);
            let (neg, pos) = d.label_counts();
            prop_assume!(neg > 0 && pos > 0);
            let b = balance_undersample(&d, seed).unwrap();
            let (bn, bp) = b.label_counts();
            prop_assert_eq!(bn, bp);
            prop_assert_eq!(bn, neg.min(pos));
            prop_assert_eq!(b, balance_undersample(&d, seed).unwrap());
        }

        #[test]
        fn balanced_input_is_unchanged(half in 1usize..30, seed in any::<u64>()) {
            let labels: Vec<u8> = (0..2 * half).map(|i| (i % 2) as u8).collect();
            let d = labelled(&labels);
            prop_assert_eq!(balance_undersample(&d, seed).unwrap(), d);
        }
    }
}
