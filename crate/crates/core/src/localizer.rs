//! Turns a detected window into a per-timestamp status series and an
//! estimated appliance power series.
//!
//! For a detected window every member's class-1 CAM is divided by its own
//! maximum, the maps are averaged, multiplied pointwise with the scaled input
//! window and passed through a sigmoid; timestamps above one half are ON.
//! Undetected windows are OFF everywhere.

use serde::{Deserialize, Serialize};

use crate::dataproc::ApplianceProfile;
use crate::ensemble::{Ensemble, MemberOutput};
use crate::error::{shape_err, validation_err, Result};

/// Per-timestamp relevance map of one model (or of the ensemble).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CamMap {
    pub values: Vec<f64>,
    pub source: String,
}

impl CamMap {
    pub fn new(values: Vec<f64>, source: impl Into<String>) -> Self {
        Self { values, source: source.into() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Binary ON/OFF series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusSeries {
    pub values: Vec<u8>,
    pub appliance: String,
}

impl StatusSeries {
    pub fn new(values: Vec<u8>, appliance: impl Into<String>) -> Self {
        Self { values, appliance: appliance.into() }
    }

    pub fn zeros(len: usize, appliance: impl Into<String>) -> Self {
        Self::new(vec![0; len], appliance)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn any_on(&self) -> bool {
        self.values.contains(&1)
    }
}

/// Estimated appliance power in Watts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub values: Vec<f64>,
}

/// How the attention signal is rounded to a status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatusRule {
    /// ON iff `sigmoid(cam·x) > 0.5`, i.e. the product is strictly positive.
    #[default]
    Strict,
    /// ON iff `sigmoid(cam·x) >= 0.5`; zero products (including `x = 0`) are ON.
    Inclusive,
}

/// Divides by the maximum; maps with no positive value become all zeros.
pub fn normalize_cam(raw: &CamMap) -> CamMap {
    let max = raw.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let values = if max > 0.0 { raw.values.iter().map(|v| v / max).collect() } else { vec![0.0; raw.len()] };
    CamMap { values, source: raw.source.clone() }
}

/// Pointwise mean of equally long maps.
pub fn aggregate_cams(maps: &[CamMap]) -> Result<CamMap> {
    let first = maps.first().ok_or_else(|| validation_err!("cannot aggregate an empty list of CAMs"))?;
    let len = first.len();
    if let Some(bad) = maps.iter().find(|m| m.len() != len) {
        return Err(shape_err!("CAM lengths differ: {} vs {}", bad.len(), len));
    }
    let n = maps.len() as f64;
    let values = (0..len).map(|t| maps.iter().map(|m| m.values[t]).sum::<f64>() / n).collect();
    Ok(CamMap { values, source: "ensemble".into() })
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Applies the ensemble CAM as an attention mask on the scaled window and
/// rounds the sigmoid of the product.
pub fn attention_binarize(cam_ens: &CamMap, window: &[f64], rule: StatusRule, appliance: &str) -> Result<StatusSeries> {
    if cam_ens.len() != window.len() {
        return Err(shape_err!("CAM has {} values, window has {}", cam_ens.len(), window.len()));
    }
    let values = cam_ens
        .values
        .iter()
        .zip(window)
        .map(|(c, x)| {
            let s = sigmoid(c * x);
            let on = match rule {
                StatusRule::Strict => s > 0.5,
                StatusRule::Inclusive => s >= 0.5,
            };
            u8::from(on)
        })
        .collect();
    Ok(StatusSeries::new(values, appliance))
}

/// Result of localizing one window.
#[derive(Debug, Clone, PartialEq)]
pub struct Localization {
    pub status: StatusSeries,
    pub prob: f64,
    pub detected: bool,
    /// Aggregated normalized CAM, present only for detected windows.
    pub cam: Option<CamMap>,
}

/// Full pipeline for one scaled window: detection gate, then CAM extraction,
/// normalization, aggregation and attention binarization.
pub fn localize(ens: &Ensemble, window: &[f64]) -> Result<Localization> {
    localize_with(ens, window, StatusRule::Strict)
}

pub fn localize_with(ens: &Ensemble, window: &[f64], rule: StatusRule) -> Result<Localization> {
    let members = ens.member_outputs(window)?;
    localize_members(ens, &members, window, rule)
}

/// Localizes many windows, batching the forward passes.
pub fn localize_batch(ens: &Ensemble, windows: &[&[f64]], rule: StatusRule) -> Result<Vec<Localization>> {
    let outputs = ens.member_outputs_batch(windows)?;
    outputs.iter().zip(windows).map(|(m, w)| localize_members(ens, m, w, rule)).collect()
}

/// Localization from already computed member outputs for `window`.
pub fn localize_members(ens: &Ensemble, members: &[MemberOutput], window: &[f64], rule: StatusRule) -> Result<Localization> {
    let prob = ens.combine(members.iter().map(|m| m.prob));
    let detected = prob > ens.threshold;
    if !detected {
        return Ok(Localization { status: StatusSeries::zeros(window.len(), &ens.appliance), prob, detected, cam: None });
    }
    let normalized: Vec<CamMap> = members.iter().map(|m| normalize_cam(&m.cam)).collect();
    let cam = aggregate_cams(&normalized)?;
    let status = attention_binarize(&cam, window, rule, &ens.appliance)?;
    Ok(Localization { status, prob, detected, cam: Some(cam) })
}

/// `p̂(t) = min(ŝ(t)·P_a, x(t))` on the unscaled aggregate in Watts.
pub fn estimate_power(status: &StatusSeries, profile: &ApplianceProfile, aggregate_w: &[f64]) -> Result<PowerEstimate> {
    if status.len() != aggregate_w.len() {
        return Err(shape_err!("status has {} values, aggregate has {}", status.len(), aggregate_w.len()));
    }
    if let Some(bad) = aggregate_w.iter().find(|v| !(**v >= 0.0)) {
        return Err(validation_err!("aggregate power must be non-negative, found {bad}"));
    }
    let values = status
        .values
        .iter()
        .zip(aggregate_w)
        .map(|(&s, &x)| (f64::from(s) * profile.mean_power_w).min(x))
        .collect();
    Ok(PowerEstimate { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cam(v: &[f64]) -> CamMap {
        CamMap::new(v.to_vec(), "t")
    }

    #[test]
    fn normalization_divides_by_the_maximum() {
        assert_eq!(normalize_cam(&cam(&[-1.0, 2.0, 4.0])).values, vec![-0.25, 0.5, 1.0]);
        assert_eq!(normalize_cam(&cam(&[0.5])).values, vec![1.0]);
        assert_eq!(normalize_cam(&cam(&[-3.0, -1.0])).values, vec![0.0, 0.0]);
    }

    #[test]
    fn aggregation_is_a_pointwise_mean() {
        let a = cam(&[0.0, 1.0]);
        let b = cam(&[1.0, 0.0]);
        assert_eq!(aggregate_cams(&[a.clone(), b.clone()]).unwrap().values, vec![0.5, 0.5]);
        assert_eq!(aggregate_cams(&[b.clone(), a.clone()]).unwrap().values, vec![0.5, 0.5]);
        assert_eq!(aggregate_cams(std::slice::from_ref(&a)).unwrap().values, a.values);
        assert!(aggregate_cams(&[]).is_err());
        assert!(aggregate_cams(&[a, cam(&[1.0])]).is_err());
    }

    #[test]
    fn binarization_follows_the_sign_of_the_product() {
        let s = attention_binarize(&cam(&[0.5, -0.5, 0.7]), &[2.0, 2.0, 0.0], StatusRule::Strict, "a").unwrap();
        assert_eq!(s.values, vec![1, 0, 0]);
        let s = attention_binarize(&cam(&[0.5, -0.5, 0.7]), &[2.0, 2.0, 0.0], StatusRule::Inclusive, "a").unwrap();
        assert_eq!(s.values, vec![1, 0, 1]);
        assert!((sigmoid(1.0) - 0.7311).abs() < 1e-4);
        assert!((sigmoid(-1.0) - 0.2689).abs() < 1e-4);
        assert!(attention_binarize(&cam(&[1.0]), &[1.0, 2.0], StatusRule::Strict, "a").is_err());
    }

    #[test]
    fn power_is_clipped_to_the_aggregate() {
        let dishwasher = ApplianceProfile::builtin("dishwasher").unwrap();
        let kettle = ApplianceProfile::builtin("kettle").unwrap();
        let on = StatusSeries::new(vec![1], "x");
        assert_eq!(estimate_power(&on, &dishwasher, &[500.0]).unwrap().values, vec![500.0]);
        assert_eq!(estimate_power(&on, &kettle, &[3000.0]).unwrap().values, vec![2000.0]);
        let off = StatusSeries::new(vec![0, 0], "x");
        assert_eq!(estimate_power(&off, &kettle, &[3000.0, 10.0]).unwrap().values, vec![0.0, 0.0]);
        assert!(estimate_power(&on, &kettle, &[-1.0]).is_err());
    }

    proptest! {
        #[test]
        fn estimate_never_exceeds_aggregate(
            rows in prop::collection::vec((0u8..2, 0.0f64..5000.0), 1..64),
            mean_power in 1.0f64..10_000.0,
        ) {
            let profile = ApplianceProfile::new("p", 1.0_f64.min(mean_power), mean_power, 60).unwrap();
            let status = StatusSeries::new(rows.iter().map(|r| r.0).collect(), "p");
            let agg: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let est = estimate_power(&status, &profile, &agg).unwrap();
            for (p, x) in est.values.iter().zip(&agg) {
                prop_assert!(p <= x);
            }
        }

        #[test]
        fn normalization_is_scale_invariant(
            values in prop::collection::vec(-10.0f64..10.0, 1..40),
            scale in 0.01f64..100.0,
        ) {
            let a = normalize_cam(&cam(&values));
            let scaled: Vec<f64> = values.iter().map(|v| v * scale).collect();
            let b = normalize_cam(&cam(&scaled));
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn raising_the_cam_never_switches_off(
            c in -5.0f64..5.0, bump in 0.0f64..5.0, x in 0.001f64..10.0,
        ) {
            let lo = attention_binarize(&cam(&[c]), &[x], StatusRule::Strict, "a").unwrap();
            let hi = attention_binarize(&cam(&[c + bump]), &[x], StatusRule::Strict, "a").unwrap();
            prop_assert!(hi.values[0] >= lo.values[0]);
        }
    }
}
