//! Experiment configuration.
//!
//! Precedence, lowest first: built-in defaults, the `--config` file,
//! `CAMAL_DATA_DIR` / `CAMAL_MODEL_DIR` / `CAMAL_OUTPUT_DIR` (paths only),
//! then command-line flags.

use std::path::{Path, PathBuf};

use camal_core::dataproc::{load_profiles, ApplianceProfile, SplitRatios, DEFAULT_WINDOW_LEN};
use camal_core::ensemble::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// How training windows get their weak label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// 1 iff the sub-meter shows the appliance ON somewhere in the window.
    #[default]
    Window,
    /// Every window of an owning house is positive.
    Possession,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data_dir: PathBuf,
    pub model_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { data_dir: "data".into(), model_dir: "model".into(), output_dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub paths: Paths,
    pub appliance: String,
    /// Extra `[[appliance]]` profiles; searched before the built-in ones.
    pub profiles_file: Option<PathBuf>,
    pub window_len: usize,
    pub interval_s: i64,
    pub label_mode: LabelMode,
    /// Undersample the majority class of the training houses.
    pub balance: bool,
    pub split: SplitRatios,
    pub seed: u64,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            appliance: "dishwasher".into(),
            profiles_file: None,
            window_len: DEFAULT_WINDOW_LEN,
            interval_s: 60,
            label_mode: LabelMode::Window,
            balance: true,
            split: SplitRatios::default(),
            seed: 0,
            train: TrainConfig::default(),
        }
    }
}

/// A run manifest embeds the configuration it ran with.
#[derive(Deserialize)]
struct EmbeddedConfig {
    config: ExperimentConfig,
}

impl ExperimentConfig {
    /// Reads a TOML config, or the `config` entry of a JSON run manifest.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e == "json");
        if is_json {
            let m: EmbeddedConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::usage(format!("{}: not a run manifest: {e}", path.display())))?;
            Ok(m.config)
        } else {
            toml::from_str(&text).map_err(|e| CliError::usage(format!("{}: {}", path.display(), e.message())))
        }
    }

    /// Defaults, optionally overlaid by a config file, then by path variables.
    pub fn resolve(file: Option<&Path>) -> Result<Self, CliError> {
        let mut cfg = match file {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var_os(k));
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<std::ffi::OsString>) {
        if let Some(v) = get("CAMAL_DATA_DIR") {
            self.paths.data_dir = v.into();
        }
        if let Some(v) = get("CAMAL_MODEL_DIR") {
            self.paths.model_dir = v.into();
        }
        if let Some(v) = get("CAMAL_OUTPUT_DIR") {
            self.paths.output_dir = v.into();
        }
    }

    /// Checks values and resolves the appliance profile.
    pub fn validate(&self) -> Result<ApplianceProfile, CliError> {
        if self.window_len == 0 {
            return Err(CliError::usage("window_len must be positive"));
        }
        if self.interval_s <= 0 {
            return Err(CliError::usage("interval_s must be positive"));
        }
        self.split.validate()?;
        self.train.validate()?;
        self.profile()
    }

    pub fn profile(&self) -> Result<ApplianceProfile, CliError> {
        if let Some(file) = &self.profiles_file {
            let found = load_profiles(file)?.into_iter().find(|p| p.name == self.appliance);
            if let Some(p) = found {
                return Ok(p);
            }
        }
        ApplianceProfile::builtin(&self.appliance)
            .ok_or_else(|| CliError::usage(format!("unknown appliance {:?} (no profile found)", self.appliance)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let p = ExperimentConfig::default().validate().unwrap();
        assert_eq!(p.name, "dishwasher");
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let cfg: ExperimentConfig = toml::from_str("seed = 4\n[train]\ntrials = 1\n").unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.train.trials, 1);
        assert_eq!(cfg.train.ensemble_size, 5);
        assert_eq!(cfg.window_len, 510);
        assert!(toml::from_str::<ExperimentConfig>("sede = 4\n").is_err());
    }

    #[test]
    fn env_overrides_paths_only() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_env(|k| (k == "CAMAL_DATA_DIR").then(|| "/tmp/d".into()));
        assert_eq!(cfg.paths.data_dir, PathBuf::from("/tmp/d"));
        assert_eq!(cfg.paths.model_dir, PathBuf::from("model"));
    }

    #[test]
    fn unknown_appliance_is_a_usage_error() {
        let cfg = ExperimentConfig { appliance: "toaster".into(), ..ExperimentConfig::default() };
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
    }
}
