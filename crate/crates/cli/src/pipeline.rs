//! From a data directory to train/validation/test windows, and from an
//! ensemble plus windows to scores.

use std::path::{Path, PathBuf};

use camal_core::dataproc::{
    balance_undersample, derive_status, forward_fill, make_windows, read_house_csv, resample, split_houses,
    split_houses_stratified, ApplianceProfile, HouseSplit, PowerSeries, WindowDataset,
};
use camal_core::ensemble::Ensemble;
use camal_core::gradcore::derive_seed;
use camal_core::localizer::{estimate_power, localize_batch, Localization, StatusRule};
use camal_core::metrics::{energy_scores_slices, status_scores_slices, ConfusionCounts, MetricsReport};
use camal_core::synth::SynthManifest;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, LabelMode};
use crate::error::CliError;

/// A house CSV found in the data directory.
#[derive(Debug, Clone, PartialEq)]
pub struct HouseInput {
    pub house_id: String,
    pub path: PathBuf,
    /// Possession flag when the directory states it.
    pub owns: Option<bool>,
}

/// Houses listed by a synthetic `manifest.json`, or every `*.csv` that is
/// not a `*_status.csv`, sorted by id.
pub fn discover_houses(data_dir: &Path) -> Result<Vec<HouseInput>, CliError> {
    if !data_dir.is_dir() {
        return Err(CliError::usage(format!("data directory {} does not exist", data_dir.display())));
    }
    if data_dir.join("manifest.json").is_file() {
        let m = SynthManifest::load(data_dir)?;
        return Ok(m
            .houses
            .into_iter()
            .map(|h| HouseInput { path: data_dir.join(&h.file), house_id: h.house_id, owns: Some(h.owns_target) })
            .collect());
    }
    let entries = std::fs::read_dir(data_dir).map_err(|e| CliError::runtime(format!("{}: {e}", data_dir.display())))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::runtime(e.to_string()))?.path();
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
        if path.extension().is_some_and(|e| e == "csv") && !stem.ends_with("_status") {
            out.push(HouseInput { house_id: stem.to_string(), path: path.clone(), owns: None });
        }
    }
    if out.is_empty() {
        return Err(CliError::usage(format!("no house CSV files in {}", data_dir.display())));
    }
    out.sort_by(|a, b| a.house_id.cmp(&b.house_id));
    Ok(out)
}

/// One house resampled, gap-filled and windowed.
#[derive(Debug, Clone)]
pub struct PreparedHouse {
    pub house_id: String,
    pub owns: bool,
    pub aggregate: PowerSeries,
    pub data: WindowDataset,
}

/// Resampling to `interval_s` and forward filling use the profile's limit.
pub fn regularize(raw: &PowerSeries, profile: &ApplianceProfile, interval_s: i64) -> Result<PowerSeries, CliError> {
    Ok(forward_fill(&resample(raw, interval_s)?, profile.max_ffill_s)?)
}

pub fn prepare_house(
    input: &HouseInput,
    profile: &ApplianceProfile,
    interval_s: i64,
    window_len: usize,
) -> Result<PreparedHouse, CliError> {
    let rec = read_house_csv(&input.path, &input.house_id)?;
    let aggregate = regularize(&rec.aggregate, profile, interval_s)?;
    let appliance = match &rec.appliance {
        Some(a) => Some(regularize(a, profile, interval_s)?),
        None => None,
    };
    let status = appliance.as_ref().map(|a| derive_status(a, profile));
    let owns = match (input.owns, &status) {
        (Some(o), _) => o,
        (None, Some(s)) => s.any_on(),
        (None, None) => {
            return Err(CliError::runtime(format!(
                "{}: no appliance_w column and no possession flag for house {}",
                input.path.display(),
                input.house_id
            )))
        }
    };
    let data = make_windows(&aggregate, status.as_ref(), appliance.as_ref(), window_len)?;
    Ok(PreparedHouse { house_id: input.house_id.clone(), owns, aggregate, data })
}

/// Windows of every role.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub split: HouseSplit,
    pub train: WindowDataset,
    pub validation: WindowDataset,
    pub test: WindowDataset,
}

fn concat_role(houses: &[PreparedHouse], ids: &[String], window_len: usize, mode: Option<LabelMode>) -> Result<WindowDataset, CliError> {
    let parts: Vec<WindowDataset> = houses
        .iter()
        .filter(|h| ids.contains(&h.house_id))
        .map(|h| {
            let mut d = h.data.clone();
            if mode == Some(LabelMode::Possession) {
                d.weak_labels.fill(u8::from(h.owns));
            }
            d
        })
        .collect();
    if parts.is_empty() {
        return Ok(WindowDataset::empty(window_len));
    }
    Ok(WindowDataset::concat(&parts)?)
}

/// Reads every house, splits houses (by possession when both groups have
/// at least three houses) and assembles the three window sets. Test windows
/// always keep their sub-meter weak labels.
pub fn prepare_experiment(cfg: &ExperimentConfig, profile: &ApplianceProfile) -> Result<Prepared, CliError> {
    let inputs = discover_houses(&cfg.paths.data_dir)?;
    let houses: Vec<PreparedHouse> = inputs
        .par_iter()
        .map(|h| prepare_house(h, profile, cfg.interval_s, cfg.window_len))
        .collect::<Result<_, _>>()?;
    let flags: Vec<(String, bool)> = houses.iter().map(|h| (h.house_id.clone(), h.owns)).collect();
    let owners = flags.iter().filter(|f| f.1).count();
    let split_seed = derive_seed(cfg.seed, &[0x5911]);
    let split = if owners >= 3 && flags.len() - owners >= 3 {
        split_houses_stratified(&flags, cfg.split, split_seed)?
    } else {
        let ids: Vec<String> = flags.iter().map(|f| f.0.clone()).collect();
        split_houses(&ids, cfg.split, split_seed)?
    };
    let mode = Some(cfg.label_mode);
    let mut train = concat_role(&houses, &split.train, cfg.window_len, mode)?;
    let (neg, pos) = train.label_counts();
    if neg == 0 || pos == 0 {
        return Err(CliError::runtime(format!(
            "training houses {:?} give only one class ({neg} negative, {pos} positive windows); \
             windows with and without {} activity are both needed",
            split.train, cfg.appliance
        )));
    }
    if cfg.balance {
        train = balance_undersample(&train, derive_seed(cfg.seed, &[0xba1]))?;
    }
    let validation = concat_role(&houses, &split.validation, cfg.window_len, mode)?;
    let test = concat_role(&houses, &split.test, cfg.window_len, None)?;
    Ok(Prepared { split, train, validation, test })
}

/// Localizes every window of `data`.
pub fn localize_dataset(ens: &Ensemble, data: &WindowDataset, rule: StatusRule) -> Result<Vec<Localization>, CliError> {
    let windows: Vec<&[f64]> = (0..data.len()).map(|i| data.window(i)).collect();
    Ok(localize_batch(ens, &windows, rule)?)
}

/// Scores already computed localizations against the dataset's ground truth.
pub fn score(
    data: &WindowDataset,
    locs: &[Localization],
    profile: &ApplianceProfile,
) -> Result<MetricsReport, CliError> {
    let truth = data
        .strong_status
        .as_ref()
        .ok_or_else(|| CliError::runtime("evaluation needs per-timestamp ground truth"))?;
    let truth_power = data.appliance_w.as_ref().expect("status and appliance power come together");
    let mut pred = Vec::with_capacity(truth.len());
    let mut power = Vec::with_capacity(truth.len());
    for (i, loc) in locs.iter().enumerate() {
        pred.extend_from_slice(&loc.status.values);
        power.extend(estimate_power(&loc.status, profile, data.aggregate(i))?.values);
    }
    let detected: Vec<u8> = locs.iter().map(|l| u8::from(l.detected)).collect();
    let detection = ConfusionCounts::from_labels(&detected, &data.weak_labels)?;
    let status = status_scores_slices(&pred, truth)?;
    let energy = energy_scores_slices(&power, truth_power)?;
    Ok(MetricsReport::new(status, energy, detection))
}

pub fn evaluate_dataset(
    ens: &Ensemble,
    data: &WindowDataset,
    profile: &ApplianceProfile,
    rule: StatusRule,
) -> Result<MetricsReport, CliError> {
    score(data, &localize_dataset(ens, data, rule)?, profile)
}
