use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LcaKind {
    Tmis,
    BMatching,
    SelfOnly,
}

/// Flags shared by every subcommand. Anything left unset falls back to the
/// `--config` file and then to the built-in default.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// Input graph in the `u v p` edge-list format.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// JSON file with any of the settings below; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for trial loops (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Monte Carlo sample count.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Sparsifier rounds; a comma-separated list for `evaluate`.
    #[arg(long = "R", value_delimiter = ',')]
    pub rounds: Option<Vec<usize>>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub alpha: Option<usize>,
    #[arg(long)]
    pub walk_len: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    /// Force exact enumeration instead of sampling.
    #[arg(long)]
    pub exact: bool,
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Evaluate a fixed subgraph instead of building one.
    #[arg(long)]
    pub h_file: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub lca: Option<LcaKind>,
    #[arg(long)]
    pub sweeps: Option<usize>,
    /// Pipeline trials for `verify`.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Fixed lower threshold (requires `--tau-plus`).
    #[arg(long)]
    pub tau_minus: Option<f64>,
    #[arg(long)]
    pub tau_plus: Option<f64>,
    /// Exponent of the correlation guard on `x`.
    #[arg(long)]
    pub delta_exponent: Option<f64>,
}

/// The JSON config file; every field optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub samples: Option<usize>,
    #[serde(alias = "R")]
    pub rounds: Option<Vec<usize>>,
    pub eps: Option<f64>,
    pub alpha: Option<usize>,
    pub walk_len: Option<usize>,
    pub depth: Option<usize>,
    pub exact: Option<bool>,
    pub out: Option<PathBuf>,
    pub h_file: Option<PathBuf>,
    pub lca: Option<LcaKind>,
    pub sweeps: Option<usize>,
    pub trials: Option<usize>,
    pub tau_minus: Option<f64>,
    pub tau_plus: Option<f64>,
    pub delta_exponent: Option<f64>,
}

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub input: PathBuf,
    pub seed: u64,
    pub threads: Option<usize>,
    pub samples: Option<usize>,
    pub rounds: Option<Vec<usize>>,
    pub eps: f64,
    pub alpha: usize,
    pub walk_len: usize,
    pub depth: usize,
    pub exact: bool,
    pub out: Option<PathBuf>,
    pub h_file: Option<PathBuf>,
    pub lca: LcaKind,
    pub sweeps: usize,
    pub trials: Option<usize>,
    pub thresholds: Option<(f64, f64)>,
    pub delta_exponent: Option<f64>,
}

fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
}

impl ExperimentConfig {
    pub fn resolve(flags: Flags) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(p) => load_file(p)?,
            None => FileConfig::default(),
        };
        let input = flags
            .input
            .or(file.input)
            .ok_or_else(|| CliError::Usage("--input is required".into()))?;
        let thresholds = match (flags.tau_minus.or(file.tau_minus), flags.tau_plus.or(file.tau_plus)) {
            (Some(lo), Some(hi)) => Some((lo, hi)),
            (None, None) => None,
            _ => return Err(CliError::Usage("--tau-minus and --tau-plus go together".into())),
        };
        let cfg = ExperimentConfig {
            input,
            seed: flags.seed.or(file.seed).unwrap_or(0),
            threads: flags.threads.or(file.threads),
            samples: flags.samples.or(file.samples),
            rounds: flags.rounds.or(file.rounds),
            eps: flags.eps.or(file.eps).unwrap_or(0.2),
            alpha: flags.alpha.or(file.alpha).unwrap_or(1),
            walk_len: flags.walk_len.or(file.walk_len).unwrap_or(3),
            depth: flags.depth.or(file.depth).unwrap_or(2),
            exact: flags.exact || file.exact.unwrap_or(false),
            out: flags.out.or(file.out),
            h_file: flags.h_file.or(file.h_file),
            lca: flags.lca.or(file.lca).unwrap_or(LcaKind::Tmis),
            sweeps: flags.sweeps.or(file.sweeps).unwrap_or(30),
            trials: flags.trials.or(file.trials),
            thresholds,
            delta_exponent: flags.delta_exponent.or(file.delta_exponent),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(CliError::Usage(format!("--eps must lie in (0, 1), got {}", self.eps)));
        }
        if self.rounds.as_ref().is_some_and(|r| r.is_empty() || r.contains(&0)) {
            return Err(CliError::Usage("--R values must be positive".into()));
        }
        if self.samples == Some(0) || self.trials == Some(0) || self.sweeps == 0 {
            return Err(CliError::Usage("sample, trial and sweep counts must be positive".into()));
        }
        if self.walk_len == 0 {
            return Err(CliError::Usage("--walk-len must be positive".into()));
        }
        if self.threads == Some(0) {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        Ok(())
    }
}
