//! Command-line flags. Every flag overrides its configuration counterpart.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{ExperimentConfig, LabelMode};

#[derive(Debug, Parser)]
#[command(name = "camal", version, about = "Weakly supervised appliance detection and localization")]
pub struct Cli {
    /// Master seed for data generation, splitting and training.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML configuration, or a `run.json` manifest to re-run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory of the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// More log output (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Only warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset with ground truth.
    Synth(SynthArgs),
    /// Train an ensemble on a data directory.
    Train(TrainArgs),
    /// Detect and localize an appliance in one house CSV.
    Localize(LocalizeArgs),
    /// Score a localization CSV against ground truth.
    Evaluate(EvaluateArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Train(_) => "train",
            Command::Localize(_) => "localize",
            Command::Evaluate(_) => "evaluate",
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scenario TOML, or a JSON manifest with a `scenario` entry.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub houses: Option<usize>,
    #[arg(long)]
    pub days: Option<usize>,
}

/// Flags shared by the data-consuming commands.
#[derive(Debug, Args, Default)]
pub struct ExperimentFlags {
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    #[arg(long)]
    pub appliance: Option<String>,
    /// TOML file with extra `[[appliance]]` profiles.
    #[arg(long)]
    pub profiles: Option<PathBuf>,
    #[arg(long)]
    pub window_len: Option<usize>,
    /// Resampling interval in seconds.
    #[arg(long)]
    pub interval_s: Option<i64>,
}

impl ExperimentFlags {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = &self.data_dir {
            cfg.paths.data_dir = v.clone();
        }
        if let Some(v) = &self.model_dir {
            cfg.paths.model_dir = v.clone();
        }
        if let Some(v) = &self.appliance {
            cfg.appliance = v.clone();
        }
        if let Some(v) = &self.profiles {
            cfg.profiles_file = Some(v.clone());
        }
        if let Some(v) = self.window_len {
            cfg.window_len = v;
        }
        if let Some(v) = self.interval_s {
            cfg.interval_s = v;
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: ExperimentFlags,
    #[arg(long, value_enum)]
    pub label_mode: Option<LabelMode>,
    /// Keep the class imbalance of the training houses.
    #[arg(long)]
    pub no_balance: bool,
    /// Comma-separated kernel sizes.
    #[arg(long, value_delimiter = ',')]
    pub kernel_sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub trials: Option<usize>,
    /// Members kept in the ensemble.
    #[arg(long)]
    pub ensemble_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub workers: Option<usize>,
}

impl TrainArgs {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        self.common.apply(cfg);
        if let Some(v) = self.label_mode {
            cfg.label_mode = v;
        }
        if self.no_balance {
            cfg.balance = false;
        }
        let t = &mut cfg.train;
        if let Some(v) = &self.kernel_sizes {
            t.kernel_sizes = v.clone();
        }
        if let Some(v) = self.trials {
            t.trials = v;
        }
        if let Some(v) = self.ensemble_size {
            t.ensemble_size = v;
        }
        if let Some(v) = self.max_epochs {
            t.max_epochs = v;
        }
        if let Some(v) = self.patience {
            t.patience = v;
        }
        if let Some(v) = self.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = self.learning_rate {
            t.learning_rate = v;
        }
        if let Some(v) = self.workers {
            t.workers = v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Rule {
    #[default]
    Strict,
    Inclusive,
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    #[command(flatten)]
    pub common: ExperimentFlags,
    /// House CSV with `timestamp` and `aggregate_w` columns.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Rule::Strict)]
    pub rule: Rule,
    /// Write an SVG overlay per detected window.
    #[arg(long)]
    pub plot: bool,
    #[arg(long, default_value_t = 20)]
    pub max_plots: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: ExperimentFlags,
    /// Output of `localize`.
    #[arg(long)]
    pub pred: PathBuf,
    /// House CSV with an `appliance_w` column.
    #[arg(long)]
    pub truth: PathBuf,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn flags_parse_and_override() {
        Cli::command().debug_assert();
        let cli = Cli::parse_from([
            "camal",
            "train",
            "--seed",
            "7",
            "--kernel-sizes",
            "5,9",
            "--trials",
            "1",
            "--data-dir",
            "d",
        ]);
        assert_eq!(cli.seed, Some(7));
        let Command::Train(t) = cli.command else { panic!("expected train") };
        let mut cfg = ExperimentConfig::default();
        t.apply(&mut cfg);
        assert_eq!(cfg.train.kernel_sizes, vec![5, 9]);
        assert_eq!(cfg.train.trials, 1);
        assert_eq!(cfg.paths.data_dir, PathBuf::from("d"));
        assert_eq!(cfg.train.max_epochs, 50);
    }
}
