//! The four subcommands.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use camal_core::dataproc::{derive_status, make_windows, read_house_csv, HouseSplit, WindowDataset};
use camal_core::ensemble::{CandidateReport, Ensemble};
use camal_core::localizer::{estimate_power, Localization, StatusRule};
use camal_core::metrics::{
    energy_scores_slices, status_scores_slices, ConfusionCounts, EnergyScores, MetricsReport, StatusScores,
};
use camal_core::synth::{generate, write_dataset, SyntheticConfig};
use log::info;
use serde::{Deserialize, Serialize};

use crate::args::{Cli, Command, EvaluateArgs, LocalizeArgs, Rule, SynthArgs};
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::manifest::{hash_files, list_files, sha256_file, write_json, write_text, RunManifest};
use crate::pipeline::{evaluate_dataset, localize_dataset, prepare_experiment, regularize};
use crate::plot::{Series, WindowPlot};

pub const TRAIN_REPORT: &str = "train_report.json";
pub const LOCALIZATION_CSV: &str = "localization.csv";
pub const METRICS_JSON: &str = "metrics.json";
pub const METRICS_TXT: &str = "metrics.txt";

/// Runs one parsed invocation; what it prints goes to stdout.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = ExperimentConfig::resolve(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match &cli.command {
        Command::Synth(a) => cmd_synth(cli, &cfg, a).map(|_| ()),
        Command::Train(a) => {
            a.apply(&mut cfg);
            if let Some(out) = &cli.out {
                cfg.paths.output_dir = out.clone();
            }
            cmd_train(&cfg).map(|_| ())
        }
        Command::Localize(a) => {
            a.common.apply(&mut cfg);
            if let Some(out) = &cli.out {
                cfg.paths.output_dir = out.clone();
            }
            cmd_localize(&cfg, a).map(|_| ())
        }
        Command::Evaluate(a) => {
            a.common.apply(&mut cfg);
            if let Some(out) = &cli.out {
                cfg.paths.output_dir = out.clone();
            }
            cmd_evaluate(&cfg, a).map(|_| ())
        }
    }
}

// ------------------------------------------------------------------ synth

#[derive(Deserialize)]
struct EmbeddedScenario {
    scenario: SyntheticConfig,
}

fn load_scenario(path: &Path) -> Result<SyntheticConfig, CliError> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let m: EmbeddedScenario = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("{}: no usable scenario: {e}", path.display())))?;
        return Ok(m.scenario);
    }
    SyntheticConfig::load(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

/// Writes the dataset into `--out` (or the configured data directory).
pub fn cmd_synth(cli: &Cli, cfg: &ExperimentConfig, a: &SynthArgs) -> Result<PathBuf, CliError> {
    let mut scenario = match &a.scenario {
        Some(p) => load_scenario(p)?,
        None => SyntheticConfig::easy_dishwasher(cfg.seed),
    };
    if let Some(seed) = cli.seed {
        scenario.seed = seed;
    }
    if let Some(n) = a.houses {
        scenario.num_houses = n;
    }
    if let Some(d) = a.days {
        scenario.days = d;
    }
    scenario.validate()?;
    let dir = cli.out.clone().unwrap_or_else(|| cfg.paths.data_dir.clone());
    let houses = generate(&scenario)?;
    let manifest = write_dataset(&dir, &scenario, &houses)?;

    let mut cfg = cfg.clone();
    cfg.seed = scenario.seed;
    cfg.paths.data_dir = dir.clone();
    let mut run = RunManifest::new("synth", &cfg);
    run.scenario = Some(scenario.clone());
    run.record("", &dir, &dir.join("manifest.json"))?;
    for h in &manifest.houses {
        run.record("", &dir, &dir.join(&h.file))?;
        run.record("", &dir, &dir.join(&h.status_file))?;
    }
    run.write(&dir)?;
    let owners = manifest.houses.iter().filter(|h| h.owns_target).count();
    println!(
        "wrote {} houses ({} owning {}) to {}",
        manifest.houses.len(),
        owners,
        scenario.target,
        dir.display()
    );
    Ok(dir)
}

// ------------------------------------------------------------------ train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowCounts {
    pub negative: usize,
    pub positive: usize,
}

impl From<(usize, usize)> for WindowCounts {
    fn from((negative, positive): (usize, usize)) -> Self {
        Self { negative, positive }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedMember {
    pub kernel_size: usize,
    pub seed: u64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub appliance: String,
    pub seed: u64,
    pub split: HouseSplit,
    pub train_windows: WindowCounts,
    pub validation_windows: WindowCounts,
    pub test_windows: WindowCounts,
    pub candidates: Vec<CandidateReport>,
    /// Members in ensemble order (ascending validation loss).
    pub selected: Vec<SelectedMember>,
    pub training_wall_clock_s: f64,
    pub total_wall_clock_s: f64,
    pub validation_metrics: Option<MetricsReport>,
    pub test_metrics: Option<MetricsReport>,
    pub model_dir: PathBuf,
    pub archive_sha256: String,
}

fn is_archive_file(path: &Path) -> bool {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    name == "manifest.json" || (name.starts_with("member") && name.ends_with(".bin"))
}

/// Removes a previous archive so the directory holds exactly one.
fn clear_archive(dir: &Path) -> Result<(), CliError> {
    if !dir.is_dir() {
        return Ok(());
    }
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let path = entry.map_err(|e| CliError::runtime(e.to_string()))?.path();
        if path.is_file() && is_archive_file(&path) {
            std::fs::remove_file(&path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
        }
    }
    Ok(())
}

/// Hash of the ensemble archive in `dir` (manifest plus member files).
pub fn archive_hash(dir: &Path) -> Result<String, CliError> {
    let files: Vec<PathBuf> = list_files(dir)?.into_iter().filter(|p| p.parent() == Some(dir) && is_archive_file(p)).collect();
    hash_files(dir, &files)
}

fn has_truth(d: &WindowDataset) -> bool {
    !d.is_empty() && d.strong_status.is_some()
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainReport, CliError> {
    let start = Instant::now();
    let mut cfg = cfg.clone();
    cfg.train.seed = cfg.seed;
    let profile = cfg.validate()?;
    let prepared = prepare_experiment(&cfg, &profile)?;
    info!(
        "windows: train {:?}, validation {:?}, test {:?}",
        prepared.train.label_counts(),
        prepared.validation.label_counts(),
        prepared.test.label_counts()
    );
    let outcome = camal_core::ensemble::train_ensemble(&prepared.train, &prepared.validation, &cfg.train, &cfg.appliance)?;
    let ens = &outcome.ensemble;

    let model_dir = cfg.paths.model_dir.clone();
    clear_archive(&model_dir)?;
    ens.save(&model_dir)?;
    let archive_sha256 = archive_hash(&model_dir)?;

    let rule = StatusRule::Strict;
    let validation_metrics =
        if has_truth(&prepared.validation) { Some(evaluate_dataset(ens, &prepared.validation, &profile, rule)?) } else { None };
    let test_metrics =
        if has_truth(&prepared.test) { Some(evaluate_dataset(ens, &prepared.test, &profile, rule)?) } else { None };

    let selected = ens
        .models
        .iter()
        .zip(&ens.losses)
        .map(|(m, &l)| SelectedMember { kernel_size: m.kernel_size(), seed: m.meta.seed, validation_loss: l })
        .collect();
    let report = TrainReport {
        appliance: cfg.appliance.clone(),
        seed: cfg.seed,
        split: prepared.split.clone(),
        train_windows: prepared.train.label_counts().into(),
        validation_windows: prepared.validation.label_counts().into(),
        test_windows: prepared.test.label_counts().into(),
        candidates: outcome.candidates.clone(),
        selected,
        training_wall_clock_s: outcome.wall_clock_s,
        total_wall_clock_s: start.elapsed().as_secs_f64(),
        validation_metrics,
        test_metrics,
        model_dir: model_dir.clone(),
        archive_sha256: archive_sha256.clone(),
    };

    let out = cfg.paths.output_dir.clone();
    let report_path = out.join(TRAIN_REPORT);
    write_json(&report_path, &report)?;
    let mut run = RunManifest::new("train", &cfg);
    run.arg("archive_sha256", &archive_sha256);
    for entry in std::fs::read_dir(&model_dir).map_err(|e| CliError::runtime(e.to_string()))? {
        let path = entry.map_err(|e| CliError::runtime(e.to_string()))?.path();
        if is_archive_file(&path) {
            run.record("model", &model_dir, &path)?;
        }
    }
    run.record("", &out, &report_path)?;
    run.write(&out)?;

    print!("{}", train_summary(&report));
    Ok(report)
}

fn train_summary(r: &TrainReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "trained {} candidates in {:.1}s", r.candidates.len(), r.training_wall_clock_s);
    let _ = writeln!(s, "{:>4} {:>5} {:>6} {:>12} {:>12} {:>8}", "k", "trial", "epochs", "val-sub", "validation", "selected");
    for c in &r.candidates {
        let _ = writeln!(
            s,
            "{:>4} {:>5} {:>6} {:>12.5} {:>12.5} {:>8}",
            c.kernel_size,
            c.trial,
            c.epochs_run,
            c.best_val_sub_loss,
            c.validation_loss,
            if c.selected { "yes" } else { "" }
        );
    }
    if let Some(m) = &r.validation_metrics {
        let _ = writeln!(s, "\nvalidation houses {:?}\n{}", r.split.validation, m.to_table());
    }
    if let Some(m) = &r.test_metrics {
        let _ = writeln!(s, "test houses {:?}\n{}", r.split.test, m.to_table());
    }
    let _ = writeln!(s, "archive {} sha256 {}", r.model_dir.display(), r.archive_sha256);
    s
}

// --------------------------------------------------------------- localize

/// Per-window result of `localize`.
#[derive(Debug, Clone)]
pub struct LocalizeOutput {
    pub csv: PathBuf,
    pub windows: usize,
    pub detected: usize,
    pub rows: usize,
}

pub fn cmd_localize(cfg: &ExperimentConfig, a: &LocalizeArgs) -> Result<LocalizeOutput, CliError> {
    let model_dir = &cfg.paths.model_dir;
    if !model_dir.join("manifest.json").is_file() {
        return Err(CliError::usage(format!("no ensemble archive in {}", model_dir.display())));
    }
    let ens = Ensemble::load(model_dir)?;
    if let Some(l) = a.common.window_len {
        if l != ens.window_len {
            return Err(CliError::usage(format!(
                "window length mismatch: the archive expects L = {}, got {l}",
                ens.window_len
            )));
        }
    }
    let mut cfg = cfg.clone();
    cfg.window_len = ens.window_len;
    if a.common.appliance.is_none() {
        cfg.appliance = ens.appliance.clone();
    }
    let profile = cfg.profile()?;
    if !a.input.is_file() {
        return Err(CliError::usage(format!("input {} does not exist", a.input.display())));
    }
    let house = a.input.file_stem().and_then(|s| s.to_str()).unwrap_or("input").to_string();
    let rec = read_house_csv(&a.input, &house)?;
    let aggregate = regularize(&rec.aggregate, &profile, cfg.interval_s)?;
    let appliance = match &rec.appliance {
        Some(s) => Some(regularize(s, &profile, cfg.interval_s)?),
        None => None,
    };
    let status = appliance.as_ref().map(|s| derive_status(s, &profile));
    let data = make_windows(&aggregate, status.as_ref(), appliance.as_ref(), ens.window_len)?;
    if data.is_empty() {
        return Err(CliError::runtime(format!(
            "{} has no complete window: {} samples at {} s, the archive expects L = {}",
            a.input.display(),
            aggregate.len(),
            cfg.interval_s,
            ens.window_len
        )));
    }
    let rule = match a.rule {
        Rule::Strict => StatusRule::Strict,
        Rule::Inclusive => StatusRule::Inclusive,
    };
    let locs = localize_dataset(&ens, &data, rule)?;
    let out = cfg.paths.output_dir.clone();
    let csv = out.join(LOCALIZATION_CSV);
    let rows = write_localization(&csv, &data, &locs, &profile, cfg.interval_s)?;
    let mut run = RunManifest::new("localize", &cfg);
    run.arg("input", a.input.display());
    run.arg("input_sha256", sha256_file(&a.input)?);
    run.arg("archive_sha256", archive_hash(model_dir)?);
    run.arg("rule", format!("{:?}", a.rule).to_lowercase());
    run.record("", &out, &csv)?;
    if a.plot {
        for path in write_plots(&out, &data, &locs, &profile, a.max_plots)? {
            run.record("", &out, &path)?;
        }
    }
    run.write(&out)?;
    let detected = locs.iter().filter(|l| l.detected).count();
    println!("{}: {} windows, {} detected, {} rows -> {}", house, locs.len(), detected, rows, csv.display());
    Ok(LocalizeOutput { csv, windows: locs.len(), detected, rows })
}

fn write_localization(
    path: &Path,
    data: &WindowDataset,
    locs: &[Localization],
    profile: &camal_core::dataproc::ApplianceProfile,
    interval_s: i64,
) -> Result<usize, CliError> {
    let mut text = String::from("timestamp,window,prob_ens,detected,status,est_power_w,cam\n");
    let mut rows = 0;
    for (i, loc) in locs.iter().enumerate() {
        let power = estimate_power(&loc.status, profile, data.aggregate(i))?;
        for t in 0..data.window_len {
            let ts = data.starts[i] + t as i64 * interval_s;
            let cam = loc.cam.as_ref().map_or(0.0, |c| c.values[t]);
            let _ = writeln!(
                text,
                "{ts},{i},{},{},{},{},{}",
                loc.prob,
                u8::from(loc.detected),
                loc.status.values[t],
                power.values[t],
                cam
            );
            rows += 1;
        }
    }
    write_text(path, &text)?;
    Ok(rows)
}

fn write_plots(
    out: &Path,
    data: &WindowDataset,
    locs: &[Localization],
    profile: &camal_core::dataproc::ApplianceProfile,
    max: usize,
) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    for (i, loc) in locs.iter().enumerate().filter(|(_, l)| l.detected).take(max) {
        let agg = data.aggregate(i);
        let est = estimate_power(&loc.status, profile, agg)?.values;
        let pred: Vec<f64> = loc.status.values.iter().map(|&v| f64::from(v)).collect();
        let truth: Option<Vec<f64>> = data.status(i).map(|s| s.iter().map(|&v| f64::from(v) * 0.9).collect());
        let mut power = vec![
            Series { label: "aggregate W", color: "#333333", values: agg },
            Series { label: "estimated W", color: "#1f77b4", values: &est },
        ];
        if let Some(app) = data.appliance(i) {
            power.push(Series { label: "sub-meter W", color: "#ff7f0e", values: app });
        }
        let mut status = vec![Series { label: "predicted status", color: "#2ca02c", values: &pred }];
        if let Some(t) = &truth {
            status.push(Series { label: "true status", color: "#9467bd", values: t });
        }
        let plot = WindowPlot {
            title: format!("window {i} from {} (p = {:.3})", data.starts[i], loc.prob),
            power,
            cam: loc.cam.as_ref().map(|c| c.values.as_slice()),
            status,
        };
        let path = out.join("plots").join(format!("window_{i:05}.svg"));
        write_text(&path, &plot.to_svg())?;
        written.push(path);
    }
    Ok(written)
}

// --------------------------------------------------------------- evaluate

struct PredRow {
    timestamp: i64,
    window: Option<u64>,
    detected: Option<u8>,
    status: u8,
    power: f64,
}

fn read_predictions(path: &Path) -> Result<Vec<PredRow>, CliError> {
    let ctx = |e: csv::Error| CliError::runtime(format!("{}: {e}", path.display()));
    let file = std::fs::File::open(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers().map_err(ctx)?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(ts), Some(st), Some(pw)) = (col("timestamp"), col("status"), col("est_power_w")) else {
        return Err(CliError::runtime(format!("{}: need columns timestamp, status and est_power_w", path.display())));
    };
    let (win, det) = (col("window"), col("detected"));
    let mut rows = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(ctx)?;
        let bad = |what: &str| CliError::runtime(format!("{}: row {}: bad {what}", path.display(), line + 2));
        let field = |i: usize| rec.get(i).unwrap_or("");
        let timestamp = camal_core::dataproc::parse_timestamp(field(ts)).map_err(|_| bad("timestamp"))?;
        let status: u8 = field(st).parse().map_err(|_| bad("status"))?;
        let power: f64 = field(pw).parse().map_err(|_| bad("est_power_w"))?;
        let window = win.map(|i| field(i).parse().map_err(|_| bad("window"))).transpose()?;
        let detected = det.map(|i| field(i).parse().map_err(|_| bad("detected"))).transpose()?;
        rows.push(PredRow { timestamp, window, detected, status: u8::from(status != 0), power });
    }
    if rows.is_empty() {
        return Err(CliError::runtime(format!("{}: no prediction rows", path.display())));
    }
    Ok(rows)
}

/// Scores written by `evaluate`.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub status: StatusScores,
    pub energy: EnergyScores,
}

pub fn cmd_evaluate(cfg: &ExperimentConfig, a: &EvaluateArgs) -> Result<Evaluation, CliError> {
    let profile = cfg.profile()?;
    let pred = read_predictions(&a.pred)?;
    if !a.truth.is_file() {
        return Err(CliError::usage(format!("ground truth {} does not exist", a.truth.display())));
    }
    let house = a.truth.file_stem().and_then(|s| s.to_str()).unwrap_or("truth").to_string();
    let rec = read_house_csv(&a.truth, &house)?;
    let raw = rec
        .appliance
        .as_ref()
        .ok_or_else(|| CliError::runtime(format!("{}: ground truth needs an appliance_w column", a.truth.display())))?;
    let truth = regularize(raw, &profile, cfg.interval_s)?;
    let truth_status = derive_status(&truth, &profile);
    let index: BTreeMap<i64, usize> = truth.timestamps.iter().enumerate().map(|(i, &t)| (t, i)).collect();

    let mut p_status = Vec::with_capacity(pred.len());
    let mut p_power = Vec::with_capacity(pred.len());
    let mut t_status = Vec::with_capacity(pred.len());
    let mut t_power = Vec::with_capacity(pred.len());
    let mut windows: BTreeMap<u64, (u8, u8)> = BTreeMap::new();
    for row in &pred {
        let aligned = index.get(&row.timestamp).copied().filter(|&i| truth.values[i].is_finite());
        let Some(i) = aligned else {
            return Err(CliError::runtime(format!(
                "prediction timestamp {} has no aligned ground-truth sample in {} (interval {} s)",
                format_ts(row.timestamp),
                a.truth.display(),
                cfg.interval_s
            )));
        };
        p_status.push(row.status);
        p_power.push(row.power);
        t_status.push(truth_status.values[i]);
        t_power.push(truth.values[i]);
        if let Some(w) = row.window {
            let e = windows.entry(w).or_insert((0, 0));
            e.0 |= row.detected.unwrap_or(row.status);
            e.1 |= truth_status.values[i];
        }
    }
    let status = status_scores_slices(&p_status, &t_status)?;
    let energy = energy_scores_slices(&p_power, &t_power)?;
    let (wd, wt): (Vec<u8>, Vec<u8>) = windows.values().copied().unzip();
    let detection = ConfusionCounts::from_labels(&wd, &wt)?;
    let report = MetricsReport::new(status, energy, detection);

    let out = cfg.paths.output_dir.clone();
    let json = out.join(METRICS_JSON);
    let txt = out.join(METRICS_TXT);
    write_text(&json, &(report.to_json() + "\n"))?;
    write_text(&txt, &report.to_table())?;
    let mut run = RunManifest::new("evaluate", cfg);
    run.arg("pred", a.pred.display());
    run.arg("pred_sha256", sha256_file(&a.pred)?);
    run.arg("truth", a.truth.display());
    run.arg("truth_sha256", sha256_file(&a.truth)?);
    run.record("", &out, &json)?;
    run.record("", &out, &txt)?;
    run.write(&out)?;
    print!("{}", report.to_table());
    Ok(Evaluation { report, status, energy })
}

fn format_ts(ts: i64) -> String {
    match chrono::DateTime::from_timestamp(ts, 0) {
        Some(d) => format!("{ts} ({})", d.format("%Y-%m-%dT%H:%M:%SZ")),
        None => ts.to_string(),
    }
}
