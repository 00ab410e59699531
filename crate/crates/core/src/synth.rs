//! Seeded synthetic smart-meter data with exact ground truth.
//!
//! Each house's aggregate is `max(0, base(t) + Σ_j a_j(t) + ε(t))` with a
//! daily sinusoidal base load, appliance activations placed by a Poisson
//! count per day and Gaussian noise `ε ~ N(0, σ²)`.

use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataproc::{write_house_csv, write_status_csv, PowerSeries};
use crate::error::{Error, Result};
use crate::gradcore::{derive_seed, seeded_rng};
use crate::localizer::StatusSeries;

pub const SYNTH_FORMAT_VERSION: u32 = 1;
const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignatureKind {
    /// Constant `peak_w` for `duration_steps`.
    Pulse,
    /// Consecutive constant phases.
    MultiPhase,
    /// Linear rise from the ON threshold to `peak_w`.
    Ramp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub power_w: f64,
    pub duration_steps: usize,
}

/// One appliance of the roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignatureSpec {
    pub name: String,
    pub kind: SignatureKind,
    pub on_threshold_w: f64,
    #[serde(default)]
    pub peak_w: f64,
    #[serde(default)]
    pub duration_steps: usize,
    #[serde(default)]
    pub phases: Vec<Phase>,
    pub activations_per_day: f64,
    /// Number of houses owning the appliance, spread evenly over the houses.
    pub owners: usize,
}

impl SignatureSpec {
    /// Power per step of one activation.
    pub fn profile(&self) -> Vec<f64> {
        match self.kind {
            SignatureKind::Pulse => vec![self.peak_w; self.duration_steps],
            SignatureKind::MultiPhase => {
                self.phases.iter().flat_map(|p| std::iter::repeat_n(p.power_w, p.duration_steps)).collect()
            }
            SignatureKind::Ramp => {
                let n = self.duration_steps;
                (0..n)
                    .map(|i| {
                        let frac = if n == 1 { 1.0 } else { i as f64 / (n - 1) as f64 };
                        self.on_threshold_w + frac * (self.peak_w - self.on_threshold_w)
                    })
                    .collect()
            }
        }
    }

    fn validate(&self, num_houses: usize) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::InvalidConfig(format!("appliance {}: {field} {why}", self.name)));
        if !(self.on_threshold_w > 0.0) {
            return bad("on_threshold_w", "must be positive".into());
        }
        match self.kind {
            SignatureKind::Pulse | SignatureKind::Ramp => {
                if !(self.peak_w >= self.on_threshold_w) {
                    return bad("peak_w", format!("({}) must be at least on_threshold_w", self.peak_w));
                }
                if self.duration_steps == 0 {
                    return bad("duration_steps", "must be at least 1".into());
                }
            }
            SignatureKind::MultiPhase => {
                if self.phases.is_empty() {
                    return bad("phases", "must not be empty for multi_phase".into());
                }
                if let Some(p) = self.phases.iter().find(|p| !(p.power_w >= self.on_threshold_w) || p.duration_steps == 0) {
                    return bad("phases", format!("entry {p:?} needs power_w >= on_threshold_w and duration_steps >= 1"));
                }
            }
        }
        if !(self.activations_per_day >= 0.0 && self.activations_per_day.is_finite()) {
            return bad("activations_per_day", "must be a non-negative number".into());
        }
        if self.owners > num_houses {
            return bad("owners", format!("({}) exceeds num_houses ({num_houses})", self.owners));
        }
        Ok(())
    }

    /// Whether house `i` of `n` owns the appliance.
    pub fn owned_by(&self, i: usize, n: usize) -> bool {
        (i + 1) * self.owners / n > i * self.owners / n
    }
}

/// Distribution of activation start times within a day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartModel {
    /// 85% of starts between 07:00 and 22:00, the rest anywhere.
    #[default]
    Diurnal,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub name: String,
    pub num_houses: usize,
    pub days: usize,
    pub interval_s: i64,
    #[serde(default = "default_start")]
    pub start_epoch: i64,
    pub base_level_w: f64,
    pub base_amplitude_w: f64,
    pub noise_sigma_w: f64,
    #[serde(default)]
    pub start_model: StartModel,
    /// Appliance whose sub-meter and status are exported.
    pub target: String,
    pub seed: u64,
    #[serde(default)]
    pub appliances: Vec<SignatureSpec>,
}

fn default_start() -> i64 {
    1_704_067_200
}

impl SyntheticConfig {
    /// 12 houses (6 owners), 30 days at 60 s, base 200 W + 100 W daily swing,
    /// σ = 30 W, a 90-minute two-phase dishwasher 0.7 times a day.
    pub fn easy_dishwasher(seed: u64) -> Self {
        Self {
            name: "easy-dishwasher".into(),
            num_houses: 12,
            days: 30,
            interval_s: 60,
            start_epoch: default_start(),
            base_level_w: 200.0,
            base_amplitude_w: 100.0,
            noise_sigma_w: 30.0,
            start_model: StartModel::Diurnal,
            target: "dishwasher".into(),
            seed,
            appliances: vec![SignatureSpec {
                name: "dishwasher".into(),
                kind: SignatureKind::MultiPhase,
                on_threshold_w: 300.0,
                peak_w: 0.0,
                duration_steps: 0,
                phases: vec![
                    Phase { power_w: 2000.0, duration_steps: 60 },
                    Phase { power_w: 700.0, duration_steps: 30 },
                ],
                activations_per_day: 0.7,
                owners: 6,
            }],
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn steps_per_day(&self) -> usize {
        (SECONDS_PER_DAY / self.interval_s) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::InvalidConfig(format!("{field} {why}")));
        if self.interval_s <= 0 || SECONDS_PER_DAY % self.interval_s != 0 {
            return bad("interval_s", "must be a positive divisor of 86400");
        }
        if self.num_houses == 0 {
            return bad("num_houses", "must be at least 1");
        }
        if self.days == 0 {
            return bad("days", "must be at least 1");
        }
        if !(self.noise_sigma_w >= 0.0) {
            return bad("noise_sigma_w", "must be non-negative");
        }
        if !(self.base_level_w >= 0.0) || !(self.base_amplitude_w >= 0.0) || self.base_amplitude_w > self.base_level_w {
            return bad("base_amplitude_w", "must lie in [0, base_level_w]");
        }
        let mut names: Vec<&str> = self.appliances.iter().map(|a| a.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("appliances", "must have unique names");
        }
        if !names.contains(&self.target.as_str()) {
            return Err(Error::InvalidConfig(format!("target {:?} is not in the appliance roster", self.target)));
        }
        for a in &self.appliances {
            a.validate(self.num_houses)?;
        }
        Ok(())
    }

    pub fn house_id(&self, i: usize) -> String {
        format!("house_{:02}", i + 1)
    }
}

/// One placed activation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Activation {
    pub appliance: String,
    pub start_step: usize,
    pub duration_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApplianceTrace {
    pub name: String,
    pub owned: bool,
    pub power: PowerSeries,
    pub status: StatusSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticHouse {
    pub house_id: String,
    pub aggregate: PowerSeries,
    pub base: Vec<f64>,
    pub noise: Vec<f64>,
    pub appliances: Vec<ApplianceTrace>,
    pub activations: Vec<Activation>,
}

impl SyntheticHouse {
    pub fn trace(&self, name: &str) -> Option<&ApplianceTrace> {
        self.appliances.iter().find(|a| a.name == name)
    }
}

fn draw_start<R: Rng>(rng: &mut R, model: StartModel, steps_per_day: usize) -> usize {
    let uniform = |rng: &mut R| rng.random_range(0..steps_per_day);
    match model {
        StartModel::Uniform => uniform(rng),
        StartModel::Diurnal => {
            if rng.random_bool(0.85) {
                let lo = steps_per_day * 7 / 24;
                let hi = steps_per_day * 22 / 24;
                rng.random_range(lo..hi)
            } else {
                uniform(rng)
            }
        }
    }
}

/// Start steps for one appliance over the whole horizon. Activations that
/// would overlap the previous one are pushed back to start right after it.
fn schedule<R: Rng>(rng: &mut R, spec: &SignatureSpec, cfg: &SyntheticConfig) -> Vec<usize> {
    let per_day = cfg.steps_per_day();
    let duration = spec.profile().len();
    let mut starts = Vec::new();
    if spec.activations_per_day > 0.0 {
        let poisson = Poisson::new(spec.activations_per_day).expect("validated positive rate");
        for day in 0..cfg.days {
            let count = poisson.sample(rng) as usize;
            let mut today: Vec<usize> = (0..count).map(|_| day * per_day + draw_start(rng, cfg.start_model, per_day)).collect();
            today.sort_unstable();
            starts.extend(today);
        }
    }
    let horizon = cfg.days * per_day;
    let mut placed: Vec<usize> = Vec::with_capacity(starts.len());
    for s in starts {
        let s = match placed.last() {
            Some(&prev) if s < prev + duration => prev + duration,
            _ => s,
        };
        if s < horizon {
            placed.push(s);
        }
    }
    placed
}

fn generate_house(cfg: &SyntheticConfig, i: usize) -> SyntheticHouse {
    let house_seed = derive_seed(cfg.seed, &[i as u64]);
    let n = cfg.days * cfg.steps_per_day();
    let house_id = cfg.house_id(i);
    let base: Vec<f64> = (0..n)
        .map(|t| {
            let tod = (t as i64 * cfg.interval_s).rem_euclid(SECONDS_PER_DAY) as f64 / SECONDS_PER_DAY as f64;
            cfg.base_level_w + cfg.base_amplitude_w * (TAU * tod).sin()
        })
        .collect();
    let mut total = base.clone();
    let mut appliances = Vec::with_capacity(cfg.appliances.len());
    let mut activations = Vec::new();
    for (j, spec) in cfg.appliances.iter().enumerate() {
        let owned = spec.owned_by(i, cfg.num_houses);
        let mut power = vec![0.0; n];
        if owned {
            let mut rng = seeded_rng(derive_seed(house_seed, &[1, j as u64]));
            let shape = spec.profile();
            for start in schedule(&mut rng, spec, cfg) {
                let end = (start + shape.len()).min(n);
                power[start..end].copy_from_slice(&shape[..end - start]);
                activations.push(Activation { appliance: spec.name.clone(), start_step: start, duration_steps: end - start });
            }
        }
        for (acc, p) in total.iter_mut().zip(&power) {
            *acc += p;
        }
        let status = StatusSeries::new(power.iter().map(|&p| u8::from(p >= spec.on_threshold_w)).collect(), &spec.name);
        appliances.push(ApplianceTrace {
            name: spec.name.clone(),
            owned,
            power: PowerSeries::regular(&house_id, cfg.start_epoch, cfg.interval_s, power),
            status,
        });
    }
    let mut rng = seeded_rng(derive_seed(house_seed, &[0]));
    let noise: Vec<f64> = if cfg.noise_sigma_w > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_sigma_w).expect("validated sigma");
        (0..n).map(|_| normal.sample(&mut rng)).collect()
    } else {
        vec![0.0; n]
    };
    let aggregate: Vec<f64> = total.iter().zip(&noise).map(|(s, e)| (s + e).max(0.0)).collect();
    SyntheticHouse {
        aggregate: PowerSeries::regular(&house_id, cfg.start_epoch, cfg.interval_s, aggregate),
        house_id,
        base,
        noise,
        appliances,
        activations,
    }
}

/// Generates every house; bit-identical for a given configuration.
pub fn generate(cfg: &SyntheticConfig) -> Result<Vec<SyntheticHouse>> {
    cfg.validate()?;
    Ok((0..cfg.num_houses).into_par_iter().map(|i| generate_house(cfg, i)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseEntry {
    pub house_id: String,
    pub owns_target: bool,
    pub file: String,
    pub status_file: String,
    pub activations: usize,
}

/// Written next to the CSVs as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub format_version: u32,
    pub scenario: SyntheticConfig,
    pub houses: Vec<HouseEntry>,
}

impl SynthManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }
}

/// Writes `<house>.csv` (timestamp, aggregate_w, appliance_w of the target),
/// `<house>_status.csv` and `manifest.json` into `dir`.
pub fn write_dataset(dir: &Path, cfg: &SyntheticConfig, houses: &[SyntheticHouse]) -> Result<SynthManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(houses.len());
    for h in houses {
        let target = h
            .trace(&cfg.target)
            .ok_or_else(|| Error::InvalidConfig(format!("target {:?} missing from house {}", cfg.target, h.house_id)))?;
        let file = format!("{}.csv", h.house_id);
        let status_file = format!("{}_status.csv", h.house_id);
        write_house_csv(&dir.join(&file), &h.aggregate, Some(&target.power))?;
        write_status_csv(&dir.join(&status_file), &h.aggregate.timestamps, &target.status)?;
        entries.push(HouseEntry {
            house_id: h.house_id.clone(),
            owns_target: target.owned,
            file,
            status_file,
            activations: h.activations.iter().filter(|a| a.appliance == cfg.target).count(),
        });
    }
    let manifest = SynthManifest { format_version: SYNTH_FORMAT_VERSION, scenario: cfg.clone(), houses: entries };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pulse_cfg(sigma: f64) -> SyntheticConfig {
        let mut cfg = SyntheticConfig::easy_dishwasher(3);
        cfg.num_houses = 2;
        cfg.days = 3;
        cfg.noise_sigma_w = sigma;
        cfg.appliances = vec![SignatureSpec {
            name: "dishwasher".into(),
            kind: SignatureKind::Pulse,
            on_threshold_w: 300.0,
            peak_w: 1000.0,
            duration_steps: 30,
            phases: vec![],
            activations_per_day: 1.0,
            owners: 1,
        }];
        cfg
    }

    #[test]
    fn no_appliances_and_no_noise_gives_the_base_load() {
        let mut cfg = pulse_cfg(0.0);
        cfg.appliances[0].owners = 0;
        for h in generate(&cfg).unwrap() {
            assert_eq!(h.aggregate.values, h.base);
        }
    }

    #[test]
    fn pulse_support_is_the_status() {
        let houses = generate(&pulse_cfg(0.0)).unwrap();
        let h = houses.iter().find(|h| h.trace("dishwasher").unwrap().owned).unwrap();
        let trace = h.trace("dishwasher").unwrap();
        assert!(!h.activations.is_empty());
        for t in 0..h.aggregate.len() {
            let diff = h.aggregate.values[t] - h.base[t];
            assert!((diff - trace.power.values[t]).abs() < 1e-9);
            assert_eq!(trace.status.values[t], u8::from(trace.power.values[t] > 0.0));
        }
    }

    #[test]
    fn ownership_is_spread_evenly() {
        let cfg = SyntheticConfig::easy_dishwasher(0);
        let owners: Vec<bool> = (0..12).map(|i| cfg.appliances[0].owned_by(i, 12)).collect();
        assert_eq!(owners.iter().filter(|&&o| o).count(), 6);
        assert_eq!(owners, (0..12).map(|i| i % 2 == 1).collect::<Vec<_>>());
    }

    #[test]
    fn ramp_starts_at_the_threshold() {
        let mut spec = pulse_cfg(0.0).appliances.remove(0);
        spec.kind = SignatureKind::Ramp;
        spec.duration_steps = 3;
        assert_eq!(spec.profile(), vec![300.0, 650.0, 1000.0]);
    }

    #[test]
    fn invalid_fields_are_named() {
        let mut cfg = SyntheticConfig::easy_dishwasher(0);
        cfg.noise_sigma_w = -1.0;
        assert!(cfg.validate().unwrap_err().to_string().contains("noise_sigma_w"));
        let err = SyntheticConfig::from_toml("name = \"x\"\nnum_houses = 2\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn toml_round_trip() {
        let cfg = SyntheticConfig::easy_dishwasher(11);
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(SyntheticConfig::from_toml(&text).unwrap(), cfg);
    }
}
