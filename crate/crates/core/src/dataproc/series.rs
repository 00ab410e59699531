use crate::error::{shape_err, validation_err, Error, Result};
use crate::localizer::StatusSeries;

use super::ApplianceProfile;

/// Timestamped power readings in Watts; `NaN` marks a missing value.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries {
    /// Epoch seconds, strictly increasing.
    pub timestamps: Vec<i64>,
    pub values: Vec<f64>,
    /// Sampling interval in seconds once the series is on a regular grid.
    pub interval_s: Option<i64>,
    pub house_id: String,
}

impl PowerSeries {
    pub fn new(house_id: impl Into<String>, timestamps: Vec<i64>, values: Vec<f64>, interval_s: Option<i64>) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(shape_err!("{} timestamps for {} values", timestamps.len(), values.len()));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(validation_err!(
                "timestamps must be strictly increasing (index {} -> {})",
                timestamps[i],
                timestamps[i + 1]
            ));
        }
        Ok(Self { timestamps, values, interval_s, house_id: house_id.into() })
    }

    /// A regular series starting at `start` with step `interval_s`.
    pub fn regular(house_id: impl Into<String>, start: i64, interval_s: i64, values: Vec<f64>) -> Self {
        let timestamps = (0..values.len() as i64).map(|i| start + i * interval_s).collect();
        Self { timestamps, values, interval_s: Some(interval_s), house_id: house_id.into() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn missing(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }
}

/// Averages readings into buckets `[t, t+Δt)` aligned to multiples of `Δt`.
/// Buckets without a valid reading are missing.
pub fn resample(raw: &PowerSeries, interval_s: i64) -> Result<PowerSeries> {
    if interval_s <= 0 {
        return Err(Error::InvalidConfig(format!("resampling interval must be positive, got {interval_s}")));
    }
    if let Some(native) = raw.interval_s {
        if native > interval_s {
            return Err(Error::InvalidConfig(format!(
                "cannot resample a {native}s series to a finer {interval_s}s grid"
            )));
        }
    }
    // re-validate ordering: the fields are public
    let raw = PowerSeries::new(raw.house_id.clone(), raw.timestamps.clone(), raw.values.clone(), raw.interval_s)?;
    let (Some(&first), Some(&last)) = (raw.timestamps.first(), raw.timestamps.last()) else {
        return Ok(PowerSeries { interval_s: Some(interval_s), ..raw });
    };
    let start = first.div_euclid(interval_s) * interval_s;
    let end = last.div_euclid(interval_s) * interval_s;
    let n = ((end - start) / interval_s + 1) as usize;
    let mut sums = vec![0.0f64; n];
    let mut counts = vec![0usize; n];
    for (&t, &v) in raw.timestamps.iter().zip(&raw.values) {
        if v.is_nan() {
            continue;
        }
        let idx = ((t - start).div_euclid(interval_s)) as usize;
        sums[idx] += v;
        counts[idx] += 1;
    }
    let values = sums.iter().zip(&counts).map(|(&s, &c)| if c == 0 { f64::NAN } else { s / c as f64 }).collect();
    Ok(PowerSeries::regular(raw.house_id, start, interval_s, values))
}

/// Fills each interior run of missing values with the last valid value when
/// the run lasts at most `max_ffill_s`; longer runs stay missing in full.
pub fn forward_fill(s: &PowerSeries, max_ffill_s: i64) -> Result<PowerSeries> {
    let dt = s
        .interval_s
        .ok_or_else(|| Error::InvalidConfig("forward fill needs a resampled (regular) series".into()))?;
    let mut values = s.values.clone();
    let mut i = 0;
    while i < values.len() {
        if !values[i].is_nan() {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < values.len() && values[i].is_nan() {
            i += 1;
        }
        let run = (i - run_start) as i64;
        if run_start > 0 && run * dt <= max_ffill_s {
            let fill = values[run_start - 1];
            values[run_start..i].fill(fill);
        }
    }
    Ok(PowerSeries { values, ..s.clone() })
}

/// `status(t) = 1` iff `power(t) >= on_threshold`; missing readings are OFF.
pub fn derive_status(appliance_power: &PowerSeries, profile: &ApplianceProfile) -> StatusSeries {
    let values = appliance_power.values.iter().map(|&p| u8::from(p >= profile.on_threshold_w)).collect();
    StatusSeries::new(values, profile.name.clone())
}
