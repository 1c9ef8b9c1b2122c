//! Flag and settings-file handling.
//!
//! Precedence is flags > settings file > built-in defaults. The settings
//! file is flat `key = value` text whose keys mirror the flag names. The
//! effective configuration is echoed into `manifest.json` next to every
//! command's outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use serde::Serialize;

use csuq_core::harness::{ExperimentConfig, SamplingMode};

/// Sampling scheme for measurement frequencies.
#[derive(ValueEnum, Debug, Clone, Copy)]
pub enum SamplingArg {
    /// Draw frequencies uniformly with replacement
    Replacement,
    /// Draw distinct frequencies
    Distinct,
}

impl From<SamplingArg> for SamplingMode {
    fn from(value: SamplingArg) -> Self {
        match value {
            SamplingArg::Replacement => SamplingMode::Replacement,
            SamplingArg::Distinct => SamplingMode::Distinct,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct CommonOpts {
    /// Flat key=value settings file; flags override its entries
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Signal dimension (number of pixels); ignored when --input is given
    #[arg(long)]
    pub p: Option<usize>,

    /// Measurement fraction n/p in (0, 1]
    #[arg(long = "n-frac", value_name = "FRAC")]
    pub n_frac: Option<f64>,

    /// Noise standard deviation
    #[arg(long)]
    pub sigma: Option<f64>,

    /// Treat sigma as known (true) or estimate it from residuals (false)
    #[arg(long = "sigma-known", num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub sigma_known: Option<bool>,

    /// Significance level of the confidence disks
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Sparsification threshold(s); `table` sweeps over every value given
    #[arg(long, value_delimiter = ',', value_name = "T,..")]
    pub threshold: Option<Vec<f64>>,

    /// Penalty as a fixed multiple of the base level
    #[arg(long = "lambda-multiple", value_name = "M", conflicts_with = "cv")]
    pub lambda_multiple: Option<f64>,

    /// Select the penalty multiple by cross-validation instead
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub cv: Option<bool>,

    /// Number of randomized trials
    #[arg(long)]
    pub trials: Option<usize>,

    /// Master seed; all randomness in a run derives from it
    #[arg(long)]
    pub seed: Option<u64>,

    /// Frequency sampling scheme
    #[arg(long, value_enum)]
    pub sampling: Option<SamplingArg>,

    /// Ground-truth image, .pgm (P2/P5) or single-channel .csv
    #[arg(long, value_name = "FILE", conflicts_with = "phantom")]
    pub input: Option<PathBuf>,

    /// Synthetic ground truth with the given support size, e.g. s0=10
    #[arg(long, value_name = "s0=N")]
    pub phantom: Option<String>,

    /// Output directory (created if missing)
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Also emit SVG plots
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    pub plots: Option<bool>,
}

/// One layer of settings; `None` means "not set at this layer".
#[derive(Debug, Clone, Default)]
struct Overrides {
    p: Option<usize>,
    n_frac: Option<f64>,
    sigma: Option<f64>,
    sigma_known: Option<bool>,
    alpha: Option<f64>,
    thresholds: Option<Vec<f64>>,
    lambda_multiple: Option<f64>,
    cv: Option<bool>,
    trials: Option<usize>,
    seed: Option<u64>,
    sampling: Option<SamplingMode>,
    input: Option<PathBuf>,
    phantom_s0: Option<usize>,
    out: Option<PathBuf>,
    plots: Option<bool>,
}

impl Overrides {
    /// Lay `other` on top of `self`.
    ///
    /// The penalty pair (lambda-multiple, cv) and the source pair
    /// (input, phantom) are each taken wholesale from the most specific
    /// layer that mentions either member, so a flag choosing one member
    /// fully replaces a file choosing the other.
    fn apply(&mut self, other: Overrides) {
        if other.p.is_some() {
            self.p = other.p;
        }
        if other.n_frac.is_some() {
            self.n_frac = other.n_frac;
        }
        if other.sigma.is_some() {
            self.sigma = other.sigma;
        }
        if other.sigma_known.is_some() {
            self.sigma_known = other.sigma_known;
        }
        if other.alpha.is_some() {
            self.alpha = other.alpha;
        }
        if other.thresholds.is_some() {
            self.thresholds = other.thresholds;
        }
        if other.lambda_multiple.is_some() || other.cv.is_some() {
            self.lambda_multiple = other.lambda_multiple;
            self.cv = other.cv;
        }
        if other.trials.is_some() {
            self.trials = other.trials;
        }
        if other.seed.is_some() {
            self.seed = other.seed;
        }
        if other.sampling.is_some() {
            self.sampling = other.sampling;
        }
        if other.input.is_some() || other.phantom_s0.is_some() {
            self.input = other.input;
            self.phantom_s0 = other.phantom_s0;
        }
        if other.out.is_some() {
            self.out = other.out;
        }
        if other.plots.is_some() {
            self.plots = other.plots;
        }
    }

    fn from_flags(opts: &CommonOpts) -> Result<Overrides> {
        Ok(Overrides {
            p: opts.p,
            n_frac: opts.n_frac,
            sigma: opts.sigma,
            sigma_known: opts.sigma_known,
            alpha: opts.alpha,
            thresholds: opts.threshold.clone(),
            lambda_multiple: opts.lambda_multiple,
            cv: opts.cv,
            trials: opts.trials,
            seed: opts.seed,
            sampling: opts.sampling.map(SamplingMode::from),
            input: opts.input.clone(),
            phantom_s0: opts
                .phantom
                .as_deref()
                .map(parse_phantom_arg)
                .transpose()?,
            out: opts.out.clone(),
            plots: opts.plots,
        })
    }
}

/// Parse a phantom argument of the form `s0=<int>`.
fn parse_phantom_arg(arg: &str) -> Result<usize> {
    let rest = arg
        .trim()
        .strip_prefix("s0=")
        .ok_or_else(|| anyhow!("expected a phantom argument of the form s0=<int>, got '{arg}'"))?;
    rest.trim()
        .parse()
        .map_err(|_| anyhow!("expected a phantom argument of the form s0=<int>, got '{arg}'"))
}

fn parse_value<T: FromStr>(path: &Path, lineno: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| {
        anyhow!(
            "{}:{}: invalid value '{}' for '{}'",
            path.display(),
            lineno,
            value,
            key
        )
    })
}

/// Parse a flat key=value settings file. Keys mirror the flag names
/// (hyphens and underscores are interchangeable); `#` starts a comment.
fn parse_file(path: &Path) -> Result<Overrides> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("failed to read settings file {}", path.display()))?;
    let mut o = Overrides::default();
    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected key = value, got '{}'", path.display(), lineno, line);
        };
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        match key.as_str() {
            "p" => o.p = Some(parse_value(path, lineno, &key, value)?),
            "n-frac" => o.n_frac = Some(parse_value(path, lineno, &key, value)?),
            "sigma" => o.sigma = Some(parse_value(path, lineno, &key, value)?),
            "sigma-known" => o.sigma_known = Some(parse_value(path, lineno, &key, value)?),
            "alpha" => o.alpha = Some(parse_value(path, lineno, &key, value)?),
            "threshold" => {
                let mut list = Vec::new();
                for part in value.split(',') {
                    list.push(parse_value(path, lineno, &key, part.trim())?);
                }
                o.thresholds = Some(list);
            }
            "lambda-multiple" => {
                o.lambda_multiple = Some(parse_value(path, lineno, &key, value)?)
            }
            "cv" => o.cv = Some(parse_value(path, lineno, &key, value)?),
            "trials" => o.trials = Some(parse_value(path, lineno, &key, value)?),
            "seed" => o.seed = Some(parse_value(path, lineno, &key, value)?),
            "sampling" => {
                o.sampling = Some(match value {
                    "replacement" => SamplingMode::Replacement,
                    "distinct" => SamplingMode::Distinct,
                    other => bail!(
                        "{}:{}: sampling must be 'replacement' or 'distinct', got '{}'",
                        path.display(),
                        lineno,
                        other
                    ),
                })
            }
            "input" => o.input = Some(PathBuf::from(value)),
            "phantom" => {
                o.phantom_s0 = Some(parse_phantom_arg(value).map_err(|e| {
                    anyhow!("{}:{}: {}", path.display(), lineno, e)
                })?)
            }
            "out" => o.out = Some(PathBuf::from(value)),
            "plots" => o.plots = Some(parse_value(path, lineno, &key, value)?),
            other => bail!("{}:{}: unknown setting '{}'", path.display(), lineno, other),
        }
    }
    Ok(o)
}

/// Fully resolved invocation: effective config plus CLI-level choices.
#[derive(Debug, Clone)]
pub struct Settings {
    pub command: String,
    pub config: ExperimentConfig,
    /// Every threshold given; `config.threshold` holds the first.
    pub thresholds: Vec<f64>,
    pub input: Option<PathBuf>,
    pub out: PathBuf,
    pub plots: bool,
}

impl Settings {
    pub fn build(command: &str, opts: &CommonOpts) -> Result<Self> {
        let mut merged = Overrides::default();
        if let Some(path) = &opts.config {
            merged.apply(parse_file(path)?);
        }
        merged.apply(Overrides::from_flags(opts)?);

        let mut config = ExperimentConfig::default();
        if let Some(v) = merged.p {
            config.p = v;
        }
        if let Some(v) = merged.n_frac {
            config.n_fraction = v;
        }
        if let Some(v) = merged.sigma {
            config.sigma = v;
        }
        if let Some(v) = merged.sigma_known {
            config.sigma_known = v;
        }
        if let Some(v) = merged.alpha {
            config.alpha = v;
        }
        let thresholds = merged.thresholds.unwrap_or_else(|| vec![config.threshold]);
        if thresholds.is_empty() {
            bail!("at least one threshold is required");
        }
        config.threshold = thresholds[0];
        if merged.cv == Some(true) {
            config.lambda_multiple = None;
        } else if let Some(m) = merged.lambda_multiple {
            config.lambda_multiple = Some(m);
        }
        if let Some(v) = merged.trials {
            config.trials = v;
        }
        if let Some(v) = merged.seed {
            config.master_seed = v;
        }
        if let Some(v) = merged.sampling {
            config.sampling_mode = v;
        }
        config.phantom_s0 = merged.phantom_s0;
        config
            .validate()
            .context("the merged settings are not a valid configuration")?;

        Ok(Settings {
            command: command.to_string(),
            config,
            thresholds,
            input: merged.input,
            out: merged.out.unwrap_or_else(|| PathBuf::from("csuq-out")),
            plots: merged.plots.unwrap_or(false),
        })
    }

    /// Snapshot of the effective invocation, written next to every output.
    pub fn manifest(&self) -> RunManifest {
        RunManifest {
            command: self.command.clone(),
            config: self.config.clone(),
            input_path: self.input.clone(),
            output_dir: self.out.clone(),
            emit_plots: self.plots,
        }
    }
}

/// Provenance record for one command invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: ExperimentConfig,
    pub input_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub emit_plots: bool,
}
