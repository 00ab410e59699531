//! Candidate training over kernel sizes and trials, selection of the members
//! with the lowest validation loss, and the ensemble detection probability.
//!
//! Every candidate `(k, trial)` owns a seed derived from the master seed, so
//! results do not depend on how candidates are scheduled across workers.

use std::cmp::Ordering;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataproc::WindowDataset;
use crate::error::{shape_err, validation_err, Error, Result};
use crate::gradcore::{derive_seed, seeded_rng, Adam, AdamConfig, Tensor3};
use crate::localizer::CamMap;
use crate::resnet::{ResNet, ResNetSpec, KERNEL_SET};

pub const ENSEMBLE_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_THRESHOLD: f64 = 0.5;
const MANIFEST: &str = "manifest.json";
const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub kernel_sizes: Vec<usize>,
    pub trials: usize,
    pub ensemble_size: usize,
    pub max_epochs: usize,
    /// Epochs without improvement of the internal validation loss before stopping.
    pub patience: usize,
    /// Minimum decrease of the internal validation loss counted as improvement.
    pub min_delta: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Candidates trained concurrently; 0 uses every available core. Not
    /// written out, since it cannot change the result.
    #[serde(skip_serializing)]
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            kernel_sizes: KERNEL_SET.to_vec(),
            trials: 3,
            ensemble_size: 5,
            max_epochs: 50,
            patience: 10,
            min_delta: 0.0,
            batch_size: 64,
            learning_rate: 1e-3,
            seed: 0,
            workers: 0,
        }
    }
}

impl TrainConfig {
    pub fn candidates(&self) -> usize {
        self.kernel_sizes.len() * self.trials
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.kernel_sizes.is_empty() || self.kernel_sizes.contains(&0) {
            return bad("kernel_sizes must be a non-empty list of positive sizes".into());
        }
        let mut sorted = self.kernel_sizes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.kernel_sizes.len() {
            return bad("kernel_sizes must not repeat".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.ensemble_size == 0 {
            return bad("ensemble_size must be at least 1".into());
        }
        if self.ensemble_size > self.candidates() {
            return Err(validation_err!(
                "ensemble_size {} exceeds the {} candidates ({} kernels x {} trials)",
                self.ensemble_size,
                self.candidates(),
                self.kernel_sizes.len(),
                self.trials
            ));
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            return bad("max_epochs and batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0) || !(self.min_delta >= 0.0) {
            return bad("learning_rate must be positive and min_delta non-negative".into());
        }
        Ok(())
    }
}

/// What happened to one candidate during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub kernel_size: usize,
    pub trial: usize,
    pub seed: u64,
    pub epochs_run: usize,
    pub best_val_sub_loss: f64,
    pub validation_loss: f64,
    pub selected: bool,
    pub wall_clock_s: f64,
}

/// Trained ensemble plus the per-candidate record.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub ensemble: Ensemble,
    pub candidates: Vec<CandidateReport>,
    pub wall_clock_s: f64,
}

/// Probability and class-1 CAM of one member on one window.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberOutput {
    pub prob: f64,
    pub cam: CamMap,
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    /// Sorted ascending by validation loss.
    pub models: Vec<ResNet<f32>>,
    pub losses: Vec<f64>,
    pub appliance: String,
    pub threshold: f64,
    pub window_len: usize,
    /// Configuration the members were trained with, when known.
    pub config: Option<TrainConfig>,
}

fn loss_order(a: f64, b: f64) -> Ordering {
    let key = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    key(a).total_cmp(&key(b))
}

impl Ensemble {
    /// Orders members by validation loss (ties by kernel size, then position).
    pub fn new(models: Vec<ResNet<f32>>, losses: Vec<f64>, appliance: impl Into<String>, window_len: usize) -> Result<Self> {
        if models.is_empty() {
            return Err(validation_err!("an ensemble needs at least one model"));
        }
        if models.len() != losses.len() {
            return Err(shape_err!("{} models but {} losses", models.len(), losses.len()));
        }
        if window_len == 0 {
            return Err(validation_err!("window length must be positive"));
        }
        let mut paired: Vec<(ResNet<f32>, f64)> = models.into_iter().zip(losses).collect();
        paired.sort_by(|a, b| loss_order(a.1, b.1).then(a.0.kernel_size().cmp(&b.0.kernel_size())));
        let (models, losses) = paired.into_iter().unzip();
        Ok(Self { models, losses, appliance: appliance.into(), threshold: DEFAULT_THRESHOLD, window_len, config: None })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// The `n` best members as an ensemble of their own.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return Err(validation_err!("cannot keep {n} of {} members", self.len()));
        }
        let mut out = self.clone();
        out.models.truncate(n);
        out.losses.truncate(n);
        Ok(out)
    }

    /// Mean of member probabilities, see [`exact_mean`].
    pub fn combine(&self, probs: impl IntoIterator<Item = f64>) -> f64 {
        exact_mean(probs)
    }

    fn check_window(&self, window: &[f64]) -> Result<()> {
        if window.len() != self.window_len {
            return Err(shape_err!("window has {} samples, the ensemble expects L = {}", window.len(), self.window_len));
        }
        Ok(())
    }

    fn batch_tensor(&self, windows: &[&[f64]]) -> Result<Tensor3<f32>> {
        let mut data = Vec::with_capacity(windows.len() * self.window_len);
        for w in windows {
            self.check_window(w)?;
            data.extend(w.iter().map(|&v| v as f32));
        }
        Tensor3::from_vec([windows.len(), 1, self.window_len], data)
    }

    /// Per-window, per-member class-1 probability and CAM.
    pub fn member_outputs_batch(&self, windows: &[&[f64]]) -> Result<Vec<Vec<MemberOutput>>> {
        let mut out: Vec<Vec<MemberOutput>> = vec![Vec::with_capacity(self.len()); windows.len()];
        for (chunk_idx, chunk) in windows.chunks(EVAL_BATCH).enumerate() {
            let x = self.batch_tensor(chunk)?;
            for model in &self.models {
                let fwd = model.infer(&x)?;
                let cams = model.cam(&fwd.features, 1)?;
                for (j, cam) in cams.into_iter().enumerate() {
                    let prob = f64::from(fwd.probs.get(j, 1));
                    out[chunk_idx * EVAL_BATCH + j].push(MemberOutput { prob, cam });
                }
            }
        }
        Ok(out)
    }

    pub fn member_outputs(&self, window: &[f64]) -> Result<Vec<MemberOutput>> {
        Ok(self.member_outputs_batch(&[window])?.pop().expect("one window in, one out"))
    }

    /// Class-1 probability of every member, without CAMs.
    pub fn member_probabilities(&self, windows: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let mut out: Vec<Vec<f64>> = vec![Vec::with_capacity(self.len()); windows.len()];
        for (chunk_idx, chunk) in windows.chunks(EVAL_BATCH).enumerate() {
            let x = self.batch_tensor(chunk)?;
            for model in &self.models {
                let fwd = model.infer(&x)?;
                for j in 0..chunk.len() {
                    out[chunk_idx * EVAL_BATCH + j].push(f64::from(fwd.probs.get(j, 1)));
                }
            }
        }
        Ok(out)
    }

    pub fn probabilities(&self, windows: &[&[f64]]) -> Result<Vec<f64>> {
        Ok(self.member_probabilities(windows)?.into_iter().map(|p| self.combine(p)).collect())
    }

    /// `Prob_ens`, the mean class-1 probability of the members.
    pub fn probability(&self, window: &[f64]) -> Result<f64> {
        Ok(self.probabilities(&[window])?[0])
    }

    /// `(prob > threshold, prob)`.
    pub fn detect(&self, window: &[f64]) -> Result<(bool, f64)> {
        let p = self.probability(window)?;
        Ok((p > self.threshold, p))
    }

    // ------------------------------------------------------------ io

    /// Writes `manifest.json` and one model file per member into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut members = Vec::with_capacity(self.len());
        for (i, (m, loss)) in self.models.iter().zip(&self.losses).enumerate() {
            let file = format!("member{i}_k{}.bin", m.kernel_size());
            m.save(&dir.join(&file))?;
            members.push(ManifestMember { file, kernel_size: m.kernel_size(), seed: m.meta.seed, validation_loss: *loss });
        }
        let manifest = Manifest {
            format_version: ENSEMBLE_FORMAT_VERSION,
            appliance: self.appliance.clone(),
            threshold: self.threshold,
            window_len: self.window_len,
            members,
            config: self.config.clone(),
        };
        let path = dir.join(MANIFEST);
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if manifest.format_version != ENSEMBLE_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "{}: ensemble format version {} is not supported",
                path.display(),
                manifest.format_version
            )));
        }
        let mut models = Vec::with_capacity(manifest.members.len());
        let mut losses = Vec::with_capacity(manifest.members.len());
        for m in &manifest.members {
            let model = ResNet::<f32>::load(&dir.join(&m.file))?;
            if model.kernel_size() != m.kernel_size {
                return Err(Error::Format(format!("{}: kernel size differs from the manifest", m.file)));
            }
            models.push(model);
            losses.push(m.validation_loss);
        }
        let mut ens = Self::new(models, losses, manifest.appliance, manifest.window_len)?;
        ens.threshold = manifest.threshold;
        ens.config = manifest.config;
        Ok(ens)
    }
}

/// Mean of `values` rounded once from the exact real mean. The sum is kept
/// as an expansion of non-overlapping partials, so the result does not
/// depend on the order of the values.
pub fn exact_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut partials = Vec::new();
    let mut count = 0usize;
    let mut naive = 0.0;
    for v in values {
        naive += v;
        grow(&mut partials, v);
        count += 1;
    }
    let n = count as f64;
    if !naive.is_finite() {
        return naive / n;
    }
    let q = round_partials(&partials) / n;
    let p = q * n;
    grow(&mut partials, -p);
    grow(&mut partials, -q.mul_add(n, -p));
    q + round_partials(&partials) / n
}

fn grow(partials: &mut Vec<f64>, mut x: f64) {
    let mut i = 0;
    for j in 0..partials.len() {
        let mut y = partials[j];
        if x.abs() < y.abs() {
            std::mem::swap(&mut x, &mut y);
        }
        let hi = x + y;
        let lo = y - (hi - x);
        if lo != 0.0 {
            partials[i] = lo;
            i += 1;
        }
        x = hi;
    }
    partials.truncate(i);
    partials.push(x);
}

/// Correctly rounded value of an expansion built by [`grow`].
fn round_partials(partials: &[f64]) -> f64 {
    let Some(mut n) = partials.len().checked_sub(1) else { return 0.0 };
    let mut hi = partials[n];
    let mut lo = 0.0;
    while n > 0 {
        let x = hi;
        n -= 1;
        let y = partials[n];
        hi = x + y;
        lo = y - (hi - x);
        if lo != 0.0 {
            break;
        }
    }
    if n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0)) {
        let y = lo * 2.0;
        let x = hi + y;
        if y == x - hi {
            hi = x;
        }
    }
    hi
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestMember {
    file: String,
    kernel_size: usize,
    seed: u64,
    validation_loss: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    appliance: String,
    threshold: f64,
    window_len: usize,
    members: Vec<ManifestMember>,
    config: Option<TrainConfig>,
}

// ---------------------------------------------------------------- training

fn labels_of(data: &WindowDataset, idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| usize::from(data.weak_labels[i])).collect()
}

fn tensor_of(data: &WindowDataset, idx: &[usize]) -> Result<Tensor3<f32>> {
    let l = data.window_len;
    let mut buf = Vec::with_capacity(idx.len() * l);
    for &i in idx {
        buf.extend(data.window(i).iter().map(|&v| v as f32));
    }
    Tensor3::from_vec([idx.len(), 1, l], buf)
}

/// Mean eval-mode cross-entropy over `idx`, weighted by batch size.
fn dataset_loss(model: &ResNet<f32>, data: &WindowDataset, idx: &[usize]) -> Result<f64> {
    let mut total = 0.0;
    for chunk in idx.chunks(EVAL_BATCH) {
        total += model.loss(&tensor_of(data, chunk)?, &labels_of(data, chunk))? * chunk.len() as f64;
    }
    Ok(total / idx.len() as f64)
}

/// 80/20 split of every class separately, so both parts keep both classes.
fn stratified_split(data: &WindowDataset, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = seeded_rng(seed);
    let mut sub = Vec::new();
    let mut val = Vec::new();
    for class in [0u8, 1] {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data.weak_labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n_val = ((idx.len() as f64 * 0.2).round() as usize).clamp(1, idx.len().saturating_sub(1).max(1));
        val.extend_from_slice(&idx[..n_val]);
        sub.extend_from_slice(&idx[n_val..]);
    }
    sub.sort_unstable();
    val.sort_unstable();
    (sub, val)
}

fn require_both_classes(data: &WindowDataset, what: &str, min_each: usize) -> Result<()> {
    data.validate()?;
    let (neg, pos) = data.label_counts();
    if neg < min_each || pos < min_each {
        return Err(validation_err!(
            "{what} set needs at least {min_each} windows of each class, has {neg} negative and {pos} positive"
        ));
    }
    Ok(())
}

struct Candidate {
    model: ResNet<f32>,
    report: CandidateReport,
}

fn train_candidate(
    k: usize,
    trial: usize,
    train: &WindowDataset,
    sub: &[usize],
    val_sub: &[usize],
    validation: &WindowDataset,
    cfg: &TrainConfig,
) -> Result<Candidate> {
    let start = Instant::now();
    let seed = derive_seed(cfg.seed, &[k as u64, trial as u64]);
    let mut model = ResNet::<f32>::build(ResNetSpec::new(k), derive_seed(seed, &[0]))?;
    let mut rng = seeded_rng(derive_seed(seed, &[1]));
    let mut opt = Adam::new(AdamConfig { lr: cfg.learning_rate, ..AdamConfig::default() });
    let mut order = sub.to_vec();
    let mut best = (f64::INFINITY, model.clone(), 0usize);
    let mut waited = 0;
    let mut epochs = 0;
    for epoch in 1..=cfg.max_epochs {
        epochs = epoch;
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            model.train_step(&tensor_of(train, batch)?, &labels_of(train, batch), &mut opt)?;
        }
        model.clear_caches();
        let loss = dataset_loss(&model, train, val_sub)?;
        log::debug!("k={k} trial={trial} epoch {epoch}: val-sub loss {loss:.5}");
        if loss < best.0 - cfg.min_delta {
            best = (loss, model.clone(), epoch);
            waited = 0;
        } else {
            waited += 1;
            if waited >= cfg.patience {
                break;
            }
        }
    }
    let (best_loss, mut model, best_epoch) = best;
    let all: Vec<usize> = (0..validation.len()).collect();
    let validation_loss = dataset_loss(&model, validation, &all)?;
    model.meta.epochs_run = epochs;
    model.meta.best_val_sub_loss = Some(best_loss);
    model.meta.validation_loss = Some(validation_loss);
    let wall_clock_s = start.elapsed().as_secs_f64();
    log::info!(
        "candidate k={k} trial={trial}: {epochs} epochs (best {best_epoch}), val-sub {best_loss:.5}, validation {validation_loss:.5}, {wall_clock_s:.1}s"
    );
    Ok(Candidate {
        model,
        report: CandidateReport {
            kernel_size: k,
            trial,
            seed,
            epochs_run: epochs,
            best_val_sub_loss: best_loss,
            validation_loss,
            selected: false,
            wall_clock_s,
        },
    })
}

/// Trains `|kernel_sizes| × trials` candidates with early stopping on an
/// internal 80/20 split of `train`, scores each on `validation` and keeps
/// the `ensemble_size` lowest-loss ones.
pub fn train_ensemble(
    train: &WindowDataset,
    validation: &WindowDataset,
    cfg: &TrainConfig,
    appliance: &str,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    require_both_classes(train, "training", 2)?;
    require_both_classes(validation, "validation", 1)?;
    if train.window_len != validation.window_len {
        return Err(shape_err!("training windows have L = {}, validation L = {}", train.window_len, validation.window_len));
    }
    let start = Instant::now();
    let (sub, val_sub) = stratified_split(train, derive_seed(cfg.seed, &[u64::MAX]));
    let jobs: Vec<(usize, usize)> =
        cfg.kernel_sizes.iter().flat_map(|&k| (0..cfg.trials).map(move |t| (k, t))).collect();
    let run = || -> Result<Vec<Candidate>> {
        jobs.par_iter()
            .map(|&(k, t)| train_candidate(k, t, train, &sub, &val_sub, validation, cfg))
            .collect()
    };
    let mut candidates = if cfg.workers == 0 {
        run()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?
            .install(run)?
    };
    candidates.sort_by(|a, b| {
        loss_order(a.report.validation_loss, b.report.validation_loss)
            .then(a.report.kernel_size.cmp(&b.report.kernel_size))
            .then(a.report.trial.cmp(&b.report.trial))
    });
    for c in candidates.iter_mut().take(cfg.ensemble_size) {
        c.report.selected = true;
    }
    let mut reports: Vec<CandidateReport> = candidates.iter().map(|c| c.report.clone()).collect();
    let (models, losses): (Vec<_>, Vec<_>) = candidates
        .into_iter()
        .take(cfg.ensemble_size)
        .map(|c| (c.model, c.report.validation_loss))
        .unzip();
    let mut ensemble = Ensemble::new(models, losses, appliance, train.window_len)?;
    ensemble.config = Some(cfg.clone());
    reports.sort_by_key(|r| (r.kernel_size, r.trial));
    Ok(TrainOutcome { ensemble, candidates: reports, wall_clock_s: start.elapsed().as_secs_f64() })
}
