//! Simulation harness: reproducible end-to-end trials of the
//! measure → solve → debias → disks pipeline, plus the experiment and
//! table drivers built on top of it.
//!
//! Every random draw is tied to the experiment's `master_seed` through a
//! per-purpose, per-trial derived seed, so results are independent of
//! thread scheduling and bitwise reproducible across runs.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{
    forward, norm2, sample_pattern, sample_pattern_distinct, SamplingPattern,
};
use crate::image::{image_dims, magnitude_image, RealImage};
use crate::lasso::{solve_classo, LassoSolution, SolverOptions};
use crate::metrics::{
    decompose, hit_indicators, ssim, DecompositionReport, TrialMetrics,
};
use crate::uq::{
    confidence_regions, debias, estimate_noise, lambda0, select_lambda_cv, ConfidenceRegions,
    CvSelection, DebiasedEstimate,
};

/// Seed stream for drawing sampling patterns.
pub const STREAM_PATTERN: u64 = 1;
/// Seed stream for drawing measurement noise.
pub const STREAM_NOISE: u64 = 2;
/// Seed stream for cross-validation fold shuffles.
pub const STREAM_CV: u64 = 3;
/// Seed stream for synthetic ground-truth generation.
pub const STREAM_PHANTOM: u64 = 4;

/// How measurement rows are drawn from the `p` available frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Independent uniform draws; rows may repeat.
    Replacement,
    /// A uniformly random subset of distinct rows (requires `n <= p`).
    Distinct,
}

/// Full description of a simulation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Ambient dimension (number of coefficients / image pixels).
    pub p: usize,
    /// Measurements as a fraction of `p`, in `(0, 1]`.
    pub n_fraction: f64,
    /// True noise level of the complex Gaussian measurement noise.
    pub sigma: f64,
    /// Whether the pipeline may use `sigma` directly (otherwise it plugs in
    /// estimates from the data).
    pub sigma_known: bool,
    /// Significance level of the confidence disks.
    pub alpha: f64,
    /// Magnitude threshold used when the truth is built from an image.
    pub threshold: f64,
    /// Fixed multiple of the base penalty level; `None` selects the multiple
    /// by cross-validation per trial.
    pub lambda_multiple: Option<f64>,
    /// Number of independent trials.
    pub trials: usize,
    /// Root seed; all randomness in the experiment derives from it.
    pub master_seed: u64,
    /// Row-sampling scheme.
    pub sampling_mode: SamplingMode,
    /// Operator constant in the base penalty level (1 for Fourier rows).
    pub k_bound: f64,
    /// Candidate grid (multiples of the base level) for cross-validation.
    pub cv_multiples: Vec<f64>,
    /// Number of cross-validation folds.
    pub cv_folds: usize,
    /// Image shape used for structural-similarity scoring; `None` picks the
    /// most square factorization of `p`.
    pub image_dims: Option<(usize, usize)>,
    /// Support size when the truth is synthesized rather than thresholded
    /// from an image.
    pub phantom_s0: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            p: 2048,
            n_fraction: 0.4,
            sigma: 1000.0,
            sigma_known: true,
            alpha: 0.05,
            threshold: 200.0,
            lambda_multiple: Some(0.25),
            trials: 100,
            master_seed: 42,
            sampling_mode: SamplingMode::Replacement,
            k_bound: 1.0,
            cv_multiples: vec![1.0, 2.0, 5.0, 10.0, 25.0, 50.0, 100.0],
            cv_folds: 5,
            image_dims: None,
            phantom_s0: None,
        }
    }
}

impl ExperimentConfig {
    /// Number of measurements: `round(n_fraction * p)`, at least 1.
    pub fn n(&self) -> usize {
        ((self.n_fraction * self.p as f64).round() as usize).max(1)
    }

    /// Draw a sampling pattern of `n` rows in this config's mode.
    pub fn draw_pattern_n(&self, n: usize, seed: u64) -> Result<SamplingPattern> {
        match self.sampling_mode {
            SamplingMode::Replacement => sample_pattern(self.p, n, seed),
            SamplingMode::Distinct => sample_pattern_distinct(self.p, n, seed),
        }
    }

    /// Check every field for internal consistency.
    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(Error::invalid("p must be >= 2"));
        }
        if !(self.n_fraction > 0.0 && self.n_fraction <= 1.0) {
            return Err(Error::invalid(format!(
                "n_fraction must lie in (0, 1], got {}",
                self.n_fraction
            )));
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::invalid(format!(
                "sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !self.threshold.is_finite() || self.threshold < 0.0 {
            return Err(Error::invalid(format!(
                "threshold must be finite and >= 0, got {}",
                self.threshold
            )));
        }
        if let Some(m) = self.lambda_multiple {
            if !m.is_finite() || m < 0.0 {
                return Err(Error::invalid(format!(
                    "penalty multiple must be finite and >= 0, got {m}"
                )));
            }
        }
        if self.trials == 0 {
            return Err(Error::invalid("at least one trial is required"));
        }
        if !self.k_bound.is_finite() || self.k_bound < 1.0 {
            return Err(Error::invalid(format!(
                "operator constant must be >= 1, got {}",
                self.k_bound
            )));
        }
        if self.lambda_multiple.is_none() {
            if self.cv_multiples.is_empty() {
                return Err(Error::invalid(
                    "cross-validation needs a non-empty candidate grid",
                ));
            }
            if let Some(&bad) = self
                .cv_multiples
                .iter()
                .find(|m| !m.is_finite() || **m <= 0.0)
            {
                return Err(Error::invalid(format!(
                    "candidate multiples must be finite and > 0, got {bad}"
                )));
            }
            if self.cv_folds < 2 {
                return Err(Error::invalid("cross-validation needs folds >= 2"));
            }
        }
        if let Some((r, c)) = self.image_dims {
            if r == 0 || c == 0 || r * c != self.p {
                return Err(Error::invalid(format!(
                    "image dims {r}x{c} do not factor p = {}",
                    self.p
                )));
            }
        }
        if let Some(s0) = self.phantom_s0 {
            if s0 == 0 || s0 > self.p {
                return Err(Error::invalid(format!(
                    "phantom support size must satisfy 1 <= s0 <= p, got {s0}"
                )));
            }
        }
        Ok(())
    }
}

/// Mix a 64-bit state to a well-dispersed output (splitmix64 finalizer).
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive an independent seed for one purpose-and-index stream from the
/// master seed. Distinct `(stream, index)` pairs give unrelated seeds, so
/// trials can run in any order (or in parallel) without affecting results.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master).wrapping_add(stream)).wrapping_add(index))
}

/// Draw `n` i.i.d. complex Gaussian noise samples with total variance
/// `sigma^2` per entry (`sigma/sqrt(2)` per real component).
pub fn generate_noise(n: usize, sigma: f64, seed: u64) -> Result<Vec<Complex64>> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::invalid(format!(
            "noise level must be finite and >= 0, got {sigma}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = sigma / std::f64::consts::SQRT_2;
    Ok((0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(scale * re, scale * im)
        })
        .collect())
}

/// Synthesize an `s0`-sparse complex ground truth: `s0` distinct positions,
/// magnitudes uniform in `[mag_low, mag_high)`, phases uniform on the circle.
/// Returns the coefficient vector and its (sorted) support.
pub fn phantom(
    p: usize,
    s0: usize,
    mag_low: f64,
    mag_high: f64,
    seed: u64,
) -> Result<(Vec<Complex64>, Vec<usize>)> {
    if p == 0 {
        return Err(Error::invalid("p must be >= 1"));
    }
    if s0 == 0 || s0 > p {
        return Err(Error::invalid(format!(
            "support size must satisfy 1 <= s0 <= p = {p}, got {s0}"
        )));
    }
    if !(mag_low.is_finite() && mag_high.is_finite()) || mag_low <= 0.0 || mag_high < mag_low {
        return Err(Error::invalid(format!(
            "magnitude range must satisfy 0 < low <= high, got [{mag_low}, {mag_high}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut support: Vec<usize> = rand::seq::index::sample(&mut rng, p, s0).into_vec();
    support.sort_unstable();
    let mut beta0 = vec![Complex64::new(0.0, 0.0); p];
    for &k in &support {
        let mag = if mag_low == mag_high {
            mag_low
        } else {
            rng.gen_range(mag_low..mag_high)
        };
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        beta0[k] = Complex64::from_polar(mag, phase);
    }
    Ok((beta0, support))
}

/// Threshold an image into a sparse complex ground truth: pixels with
/// magnitude strictly below `threshold` become zero, the rest are kept as
/// real coefficients (row-major). Returns the coefficients, the surviving
/// indices, and the support size.
pub fn sparsify_threshold(
    image: &RealImage,
    threshold: f64,
) -> Result<(Vec<Complex64>, Vec<usize>, usize)> {
    if !threshold.is_finite() || threshold < 0.0 {
        return Err(Error::invalid(format!(
            "threshold must be finite and >= 0, got {threshold}"
        )));
    }
    let mut beta0 = Vec::with_capacity(image.data.len());
    let mut support = Vec::new();
    for (i, &v) in image.data.iter().enumerate() {
        if v.abs() < threshold {
            beta0.push(Complex64::new(0.0, 0.0));
        } else {
            beta0.push(Complex64::new(v, 0.0));
            support.push(i);
        }
    }
    let s0 = support.len();
    Ok((beta0, support, s0))
}

/// Everything produced by one end-to-end trial.
#[derive(Debug, Clone)]
pub struct TrialOutcome {
    /// Scalar quality metrics of the trial.
    pub metrics: TrialMetrics,
    /// The per-coordinate confidence disks.
    pub regions: ConfidenceRegions,
    /// The penalized solve (estimate, trace, convergence data).
    pub solution: LassoSolution,
    /// The debiased estimate.
    pub estimate: DebiasedEstimate,
    /// Exact error decomposition against the known truth.
    pub decomposition: DecompositionReport,
    /// Cross-validation record when the penalty was selected from data.
    pub cv: Option<CvSelection>,
    /// The sampling pattern the trial measured with.
    pub pattern: SamplingPattern,
    /// The noisy measurements.
    pub y: Vec<Complex64>,
    /// The noise that was added (known here because the trial is simulated).
    pub epsilon: Vec<Complex64>,
}

/// Run one simulated trial: draw a pattern and noise, measure the truth,
/// solve, debias, build disks, and score everything against the truth.
pub fn run_trial(
    config: &ExperimentConfig,
    beta0: &[Complex64],
    support: &[usize],
    trial: usize,
) -> Result<TrialOutcome> {
    config.validate()?;
    let p = config.p;
    if beta0.len() != p {
        return Err(Error::dims(format!(
            "truth has length {}, config has p = {p}",
            beta0.len()
        )));
    }
    if let Some(&bad) = support.iter().find(|&&i| i >= p) {
        return Err(Error::invalid(format!(
            "support index {bad} out of range for p = {p}"
        )));
    }
    let n = config.n();
    let t = trial as u64;

    let pattern = config.draw_pattern_n(n, derive_seed(config.master_seed, STREAM_PATTERN, t))?;
    let epsilon = generate_noise(n, config.sigma, derive_seed(config.master_seed, STREAM_NOISE, t))?;
    let clean = forward(&pattern, beta0)?;
    let y: Vec<Complex64> = clean.iter().zip(&epsilon).map(|(a, b)| a + b).collect();

    // Scale plugged into the penalty level. With unknown noise the crude
    // per-measurement energy is enough, since only the order of magnitude
    // matters for the penalty.
    let sigma_scale = if config.sigma_known {
        config.sigma
    } else {
        norm2(&y) / (n as f64).sqrt()
    };

    let mut cv = None;
    let lambda = match config.lambda_multiple {
        Some(m) => m * lambda0(sigma_scale, config.k_bound, n, p)?,
        None => {
            let sel = select_lambda_cv(
                &pattern,
                &y,
                sigma_scale,
                config.k_bound,
                &config.cv_multiples,
                config.cv_folds,
                derive_seed(config.master_seed, STREAM_CV, t),
            )?;
            let lam = sel.lambda;
            cv = Some(sel);
            lam
        }
    };

    let solution = solve_classo(&pattern, &y, lambda, &SolverOptions::default())?;
    let estimate = debias(&pattern, &y, &solution.beta_hat)?;

    // Noise level reported with the disks: the residual-based estimate when
    // the true level is not available.
    let sigma_hat = if config.sigma_known {
        config.sigma
    } else {
        estimate_noise(&pattern, &y, &solution.beta_hat)?
    };
    let regions = confidence_regions(&estimate, sigma_hat, n, config.alpha)?;

    let decomposition = decompose(&pattern, &y, &solution.beta_hat, &estimate.beta_u, beta0, &epsilon)?;

    let hits_vec = hit_indicators(&regions, beta0)?;
    let hits = hits_vec.iter().filter(|&&h| h).count();
    let hits_s0 = support.iter().filter(|&&i| hits_vec[i]).count();
    let h = hits as f64 / p as f64;
    let h_s0 = if support.is_empty() {
        None
    } else {
        Some(hits_s0 as f64 / support.len() as f64)
    };

    let max_mag = beta0.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
    let ssim_score = if max_mag > 0.0 {
        let (rows, cols) = config.image_dims.unwrap_or_else(|| image_dims(p));
        let truth_img = magnitude_image(beta0, rows, cols)?;
        let est_img = magnitude_image(&solution.beta_hat, rows, cols)?;
        Some(ssim(&truth_img, &est_img, max_mag)?)
    } else {
        None
    };

    let rel_noise = crate::metrics::relative_noise(&pattern, beta0, &epsilon).ok();

    let metrics = TrialMetrics {
        h,
        h_s0,
        ssim: ssim_score,
        r_linf: decomposition.r_linf,
        relative_noise: rel_noise,
        lambda_used: lambda,
        sigma_hat,
        hits,
        hits_s0,
        iterations: solution.iterations,
        converged: solution.converged,
    };

    Ok(TrialOutcome {
        metrics,
        regions,
        solution,
        estimate,
        decomposition,
        cv,
        pattern,
        y,
        epsilon,
    })
}

/// Outcome of one trial inside an experiment: either its metrics or the
/// error that excluded it.
#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    /// Trial index within the experiment.
    pub trial: usize,
    /// Metrics of a successful trial.
    pub metrics: Option<TrialMetrics>,
    /// Error message of a failed trial.
    pub error: Option<String>,
}

/// Mean and sample standard deviation of one metric across trials.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricSummary {
    /// Mean over the trials that reported the metric.
    pub mean: f64,
    /// Sample standard deviation (zero for a single trial).
    pub std: f64,
    /// Number of trials that reported the metric.
    pub count: usize,
}

fn summarize(values: &[f64]) -> MetricSummary {
    let count = values.len();
    let mean = values.iter().sum::<f64>() / count as f64;
    let std = if count > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count as f64 - 1.0)).sqrt()
    } else {
        0.0
    };
    MetricSummary { mean, std, count }
}

fn summarize_opt(values: &[f64]) -> Option<MetricSummary> {
    if values.is_empty() {
        None
    } else {
        Some(summarize(values))
    }
}

/// Across-trial aggregates of the per-trial metrics.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateMetrics {
    /// Overall hit rate.
    pub h: MetricSummary,
    /// On-support hit rate (absent when no trial had a support).
    pub h_s0: Option<MetricSummary>,
    /// Structural similarity (absent for zero truths).
    pub ssim: Option<MetricSummary>,
    /// Remainder size from the error decomposition.
    pub r_linf: MetricSummary,
    /// Measurement-domain noise-to-signal ratio.
    pub relative_noise: Option<MetricSummary>,
    /// Penalty level actually used per trial.
    pub lambda_used: MetricSummary,
    /// Noise level used for the disks per trial.
    pub sigma_hat: MetricSummary,
    /// Solver iterations per trial.
    pub iterations: MetricSummary,
    /// Fraction of trials that completed successfully.
    pub success_rate: f64,
}

/// Everything an experiment produces.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentResult {
    /// Echo of the configuration the experiment ran with.
    pub config: ExperimentConfig,
    /// One record per requested trial, in trial order.
    pub per_trial: Vec<TrialRecord>,
    /// Across-trial aggregates over the successful trials.
    pub aggregate: AggregateMetrics,
    /// Debiased reconstruction from the last successful trial.
    pub reconstruction: Vec<Complex64>,
    /// Penalized reconstruction from the same trial.
    pub reconstruction_lasso: Vec<Complex64>,
    /// Disk radius of that trial.
    pub radius: f64,
    /// True when at least 95% of trials succeeded.
    pub valid: bool,
}

/// Run all trials of an experiment against a fixed ground truth.
///
/// Trials are independent and seeded individually, so they run in parallel
/// with deterministic results. Failed trials are recorded with their error,
/// excluded from the aggregates, and counted against the 95% success
/// threshold that `valid` reports.
pub fn run_experiment(
    config: &ExperimentConfig,
    beta0: &[Complex64],
    support: &[usize],
) -> Result<ExperimentResult> {
    config.validate()?;
    if beta0.len() != config.p {
        return Err(Error::dims(format!(
            "truth has length {}, config has p = {}",
            beta0.len(),
            config.p
        )));
    }
    if support.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(
            "support indices must be strictly increasing",
        ));
    }
    if let Some(&bad) = support.last() {
        if bad >= config.p {
            return Err(Error::invalid(format!(
                "support index {bad} out of range for p = {}",
                config.p
            )));
        }
    }

    let results: Vec<Result<TrialMetrics>> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_trial(config, beta0, support, t).map(|o| o.metrics))
        .collect();

    let successes = results.iter().filter(|r| r.is_ok()).count();
    if successes == 0 {
        let first_err = results
            .iter()
            .find_map(|r| r.as_ref().err().map(|e| e.to_string()))
            .unwrap_or_default();
        return Err(Error::Numerical {
            iteration: 0,
            message: format!("every trial failed; first error: {first_err}"),
        });
    }
    let valid = successes * 20 >= config.trials * 19;

    let per_trial: Vec<TrialRecord> = results
        .iter()
        .enumerate()
        .map(|(t, r)| match r {
            Ok(m) => TrialRecord {
                trial: t,
                metrics: Some(m.clone()),
                error: None,
            },
            Err(e) => TrialRecord {
                trial: t,
                metrics: None,
                error: Some(e.to_string()),
            },
        })
        .collect();

    let ok: Vec<&TrialMetrics> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
    let collect = |f: &dyn Fn(&TrialMetrics) -> f64| -> Vec<f64> { ok.iter().map(|m| f(m)).collect() };
    let collect_opt = |f: &dyn Fn(&TrialMetrics) -> Option<f64>| -> Vec<f64> {
        ok.iter().filter_map(|m| f(m)).collect()
    };
    let aggregate = AggregateMetrics {
        h: summarize(&collect(&|m| m.h)),
        h_s0: summarize_opt(&collect_opt(&|m| m.h_s0)),
        ssim: summarize_opt(&collect_opt(&|m| m.ssim)),
        r_linf: summarize(&collect(&|m| m.r_linf)),
        relative_noise: summarize_opt(&collect_opt(&|m| m.relative_noise)),
        lambda_used: summarize(&collect(&|m| m.lambda_used)),
        sigma_hat: summarize(&collect(&|m| m.sigma_hat)),
        iterations: summarize(&collect(&|m| m.iterations as f64)),
        success_rate: successes as f64 / config.trials as f64,
    };

    // Re-run the last successful trial once to recover its full vectors
    // (the parallel sweep keeps only scalar metrics to bound memory).
    let last_ok = results
        .iter()
        .rposition(|r| r.is_ok())
        .expect("at least one success");
    let last = run_trial(config, beta0, support, last_ok)?;

    Ok(ExperimentResult {
        config: config.clone(),
        per_trial,
        aggregate,
        reconstruction: last.estimate.beta_u,
        reconstruction_lasso: last.solution.beta_hat,
        radius: last.regions.radius,
        valid,
    })
}

/// Where the ground truth of a table run comes from.
#[derive(Debug, Clone)]
pub enum GroundTruthSource {
    /// Threshold this image at each config's `threshold`.
    Image(RealImage),
    /// Synthesize a sparse truth with each config's `phantom_s0` and these
    /// magnitude bounds.
    Phantom {
        /// Smallest coefficient magnitude.
        mag_low: f64,
        /// Largest coefficient magnitude.
        mag_high: f64,
    },
}

/// One row of a sweep table.
#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    /// Threshold the truth was built at.
    pub threshold: f64,
    /// Support size of the truth.
    pub s0: usize,
    /// Mean on-support hit rate.
    pub h_s0: f64,
    /// Mean overall hit rate.
    pub h: f64,
    /// Mean structural similarity.
    pub ssim: f64,
    /// Whether the row's experiment met the 95% success threshold.
    pub valid: bool,
}

/// Run one experiment per config against truths drawn from a common source
/// and tabulate the headline metrics.
///
/// All configs must share the same dimension `p`.
pub fn run_table(
    configs: &[ExperimentConfig],
    source: &GroundTruthSource,
) -> Result<Vec<TableRow>> {
    if configs.is_empty() {
        return Err(Error::invalid("at least one config is required"));
    }
    let p = configs[0].p;
    if configs.iter().any(|c| c.p != p) {
        return Err(Error::invalid("all table configs must share the same p"));
    }
    if let GroundTruthSource::Image(img) = source {
        if img.len() != p {
            return Err(Error::dims(format!(
                "image has {} pixels, configs have p = {p}",
                img.len()
            )));
        }
    }

    let mut rows = Vec::with_capacity(configs.len());
    for config in configs {
        config.validate()?;
        let (beta0, support) = match source {
            GroundTruthSource::Image(img) => {
                let (beta0, support, s0) = sparsify_threshold(img, config.threshold)?;
                if s0 == 0 {
                    return Err(Error::invalid(format!(
                        "threshold {} removed every coefficient",
                        config.threshold
                    )));
                }
                (beta0, support)
            }
            GroundTruthSource::Phantom { mag_low, mag_high } => {
                let s0 = config.phantom_s0.ok_or_else(|| {
                    Error::invalid("phantom table rows need phantom_s0 set in the config")
                })?;
                phantom(
                    p,
                    s0,
                    *mag_low,
                    *mag_high,
                    derive_seed(config.master_seed, STREAM_PHANTOM, 0),
                )?
            }
        };
        let result = run_experiment(config, &beta0, &support)?;
        let agg = &result.aggregate;
        rows.push(TableRow {
            threshold: config.threshold,
            s0: support.len(),
            h_s0: agg.h_s0.map_or(f64::NAN, |s| s.mean),
            h: agg.h.mean,
            ssim: agg.ssim.map_or(f64::NAN, |s| s.mean),
            valid: result.valid,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fourier::norm_inf;

    #[test]
    fn derived_seeds_are_deterministic_and_disjoint() {
        let a = derive_seed(42, STREAM_PATTERN, 7);
        assert_eq!(a, derive_seed(42, STREAM_PATTERN, 7));
        let mut seen = std::collections::HashSet::new();
        for stream in [STREAM_PATTERN, STREAM_NOISE, STREAM_CV, STREAM_PHANTOM] {
            for index in 0..256 {
                assert!(seen.insert(derive_seed(42, stream, index)));
            }
        }
        // Different masters decouple entire experiments.
        assert_ne!(a, derive_seed(43, STREAM_PATTERN, 7));
    }

    #[test]
    fn noise_has_the_right_scale_and_is_reproducible() {
        let n = 4096;
        let sigma = 3.0;
        let eps = generate_noise(n, sigma, 11).unwrap();
        assert_eq!(eps, generate_noise(n, sigma, 11).unwrap());
        assert_ne!(eps, generate_noise(n, sigma, 12).unwrap());
        let mean_sq = eps.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        assert!(
            (mean_sq - sigma * sigma).abs() < 0.1 * sigma * sigma,
            "per-entry second moment {mean_sq} should be near {}",
            sigma * sigma
        );
        // Real and imaginary parts carry half the variance each.
        let re_var = eps.iter().map(|z| z.re * z.re).sum::<f64>() / n as f64;
        assert!((re_var - 0.5 * sigma * sigma).abs() < 0.1 * sigma * sigma);
        assert!(generate_noise(4, -1.0, 0).is_err());
        assert!(generate_noise(0, 1.0, 0).unwrap().is_empty());
        for z in generate_noise(8, 0.0, 5).unwrap() {
            assert_eq!(z, Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn phantom_draws_valid_supports_and_magnitudes() {
        let (beta0, support) = phantom(128, 10, 2.0, 5.0, 99).unwrap();
        assert_eq!(support.len(), 10);
        assert!(support.windows(2).all(|w| w[0] < w[1]));
        for (k, z) in beta0.iter().enumerate() {
            if support.contains(&k) {
                let m = z.norm();
                assert!((2.0..5.0).contains(&m), "magnitude {m} out of range");
            } else {
                assert_eq!(*z, Complex64::new(0.0, 0.0));
            }
        }
        // Phases are genuinely complex (at least one off-axis coefficient).
        assert!(support.iter().any(|&k| beta0[k].im.abs() > 1e-6));
        assert_eq!(phantom(128, 10, 2.0, 5.0, 99).unwrap().0, beta0);
        assert!(phantom(8, 0, 1.0, 2.0, 0).is_err());
        assert!(phantom(8, 9, 1.0, 2.0, 0).is_err());
        assert!(phantom(8, 2, 0.0, 2.0, 0).is_err());
        assert!(phantom(8, 2, 3.0, 2.0, 0).is_err());
        // Degenerate range pins the magnitude exactly.
        let (b, s) = phantom(16, 3, 4.0, 4.0, 1).unwrap();
        for &k in &s {
            assert!((b[k].norm() - 4.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn sparsify_keeps_large_pixels_with_sign() {
        let img = RealImage::new(2, 2, vec![3.0, 0.5, -2.0, 0.0]).unwrap();
        let (beta0, support, s0) = sparsify_threshold(&img, 1.0).unwrap();
        assert_eq!(s0, 2);
        assert_eq!(support, vec![0, 2]);
        assert_eq!(beta0[0], Complex64::new(3.0, 0.0));
        assert_eq!(beta0[1], Complex64::new(0.0, 0.0));
        assert_eq!(beta0[2], Complex64::new(-2.0, 0.0));
        // Threshold zero keeps everything, including exact zeros.
        let (_, support_all, s_all) = sparsify_threshold(&img, 0.0).unwrap();
        assert_eq!(s_all, 4);
        assert_eq!(support_all, vec![0, 1, 2, 3]);
        assert!(sparsify_threshold(&img, f64::NAN).is_err());
    }

    /// Noiseless full sampling with no penalty recovers the truth to
    /// machine precision: every disk covers, and the reconstruction is
    /// structurally identical to the truth.
    #[test]
    fn full_sampling_noiseless_recovery_is_exact() {
        let mut data = vec![0.0f64; 64];
        for (k, v) in [(3, 12.0), (9, -7.0), (17, 9.0), (30, 15.0), (41, 6.0), (55, 20.0)] {
            data[k] = v;
        }
        let img = RealImage::new(8, 8, data).unwrap();
        let (beta0, support, s0) = sparsify_threshold(&img, 5.0).unwrap();
        assert_eq!(s0, 6);

        let config = ExperimentConfig {
            p: 64,
            n_fraction: 1.0,
            sigma: 0.0,
            sigma_known: false,
            alpha: 0.001,
            threshold: 5.0,
            lambda_multiple: Some(0.0),
            trials: 1,
            master_seed: 7,
            sampling_mode: SamplingMode::Distinct,
            ..ExperimentConfig::default()
        };
        let out = run_trial(&config, &beta0, &support, 0).unwrap();
        let m = &out.metrics;
        assert_eq!(m.h, 1.0);
        assert_eq!(m.h_s0, Some(1.0));
        assert!(m.ssim.unwrap() >= 1.0 - 1e-12, "ssim {:?}", m.ssim);
        assert_eq!(m.relative_noise, Some(0.0));
        // The residual left at the solver's certification threshold drives
        // the estimated noise level, so the disks collapse to solver-tolerance
        // scale rather than machine epsilon.
        assert!(out.regions.radius <= 1e-4 * 20.0, "radius {}", out.regions.radius);
        let worst = out
            .estimate
            .beta_u
            .iter()
            .zip(&beta0)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        assert!(worst <= 1e-9 * 20.0, "center error {worst}");
        assert!(m.r_linf <= 1e-8 * 20.0);

        // With the (zero) noise level declared known, the disks degenerate
        // to points and the reconstruction is still exact.
        let known = ExperimentConfig {
            sigma_known: true,
            ..config
        };
        let out2 = run_trial(&known, &beta0, &support, 0).unwrap();
        assert_eq!(out2.regions.radius, 0.0);
        assert_eq!(out2.metrics.sigma_hat, 0.0);
        assert!(out2.metrics.ssim.unwrap() >= 1.0 - 1e-12);
        assert!(out2.metrics.converged);
        assert_eq!(out2.metrics.lambda_used, 0.0);
    }

    #[test]
    fn experiments_are_reproducible_and_fully_recorded() {
        let (beta0, support) = phantom(32, 3, 50.0, 60.0, derive_seed(5, STREAM_PHANTOM, 0)).unwrap();
        let config = ExperimentConfig {
            p: 32,
            n_fraction: 0.5,
            sigma: 0.5,
            sigma_known: true,
            alpha: 0.05,
            trials: 4,
            master_seed: 5,
            ..ExperimentConfig::default()
        };
        let a = run_experiment(&config, &beta0, &support).unwrap();
        let b = run_experiment(&config, &beta0, &support).unwrap();
        assert_eq!(a.per_trial.len(), 4);
        assert!(a.valid);
        assert_eq!(a.aggregate.success_rate, 1.0);
        assert_eq!(a.reconstruction.len(), 32);
        assert_eq!(a.radius, b.radius);
        for (ra, rb) in a.per_trial.iter().zip(&b.per_trial) {
            let (ma, mb) = (ra.metrics.as_ref().unwrap(), rb.metrics.as_ref().unwrap());
            assert_eq!(ma.h, mb.h);
            assert_eq!(ma.lambda_used, mb.lambda_used);
            assert_eq!(ma.r_linf, mb.r_linf);
        }
        assert_eq!(a.reconstruction, b.reconstruction);
        // Different trials see different randomness.
        let m0 = a.per_trial[0].metrics.as_ref().unwrap();
        let m1 = a.per_trial[1].metrics.as_ref().unwrap();
        assert_ne!(m0.r_linf, m1.r_linf);
    }

    #[test]
    fn cross_validated_trials_record_their_selection() {
        let (beta0, support) = phantom(32, 2, 100.0, 120.0, 1).unwrap();
        let config = ExperimentConfig {
            p: 32,
            n_fraction: 1.0,
            sigma: 0.2,
            sigma_known: true,
            lambda_multiple: None,
            cv_multiples: vec![0.5, 5.0],
            cv_folds: 3,
            trials: 1,
            master_seed: 9,
            ..ExperimentConfig::default()
        };
        let out = run_trial(&config, &beta0, &support, 0).unwrap();
        let cv = out.cv.expect("cross-validation record");
        assert_eq!(cv.table.len(), 2);
        assert!(out.metrics.lambda_used > 0.0);
        assert_eq!(cv.lambda, out.metrics.lambda_used);
    }

    #[test]
    fn config_validation_rejects_bad_fields() {
        let ok = ExperimentConfig::default();
        assert!(ok.validate().is_ok());
        let mut c = ok.clone();
        c.n_fraction = 0.0;
        assert!(c.validate().is_err());
        c = ok.clone();
        c.n_fraction = 1.5;
        assert!(c.validate().is_err());
        c = ok.clone();
        c.alpha = 1.0;
        assert!(c.validate().is_err());
        c = ok.clone();
        c.trials = 0;
        assert!(c.validate().is_err());
        c = ok.clone();
        c.lambda_multiple = None;
        c.cv_folds = 1;
        assert!(c.validate().is_err());
        c = ok.clone();
        c.lambda_multiple = None;
        c.cv_multiples = vec![];
        assert!(c.validate().is_err());
        c = ok.clone();
        c.image_dims = Some((3, 5));
        assert!(c.validate().is_err());
        c = ok.clone();
        c.phantom_s0 = Some(0);
        assert!(c.validate().is_err());
        // n is clamped to at least one measurement.
        c = ok.clone();
        c.p = 100;
        c.n_fraction = 0.001;
        assert_eq!(c.n(), 1);
    }

    #[test]
    fn tables_sweep_thresholds_over_one_image() {
        let mut data = vec![0.0f64; 64];
        for (k, v) in [(1, 30.0), (5, 18.0), (20, 9.0), (33, 26.0), (50, 4.0)] {
            data[k] = v;
        }
        let img = RealImage::new(8, 8, data).unwrap();
        let base = ExperimentConfig {
            p: 64,
            n_fraction: 1.0,
            sigma: 0.01,
            sigma_known: true,
            lambda_multiple: Some(0.0),
            trials: 2,
            master_seed: 3,
            sampling_mode: SamplingMode::Distinct,
            ..ExperimentConfig::default()
        };
        let configs: Vec<ExperimentConfig> = [5.0, 10.0, 25.0]
            .iter()
            .map(|&t| ExperimentConfig {
                threshold: t,
                ..base.clone()
            })
            .collect();
        let rows = run_table(&configs, &GroundTruthSource::Image(img.clone())).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].s0, 4);
        assert_eq!(rows[1].s0, 3);
        assert_eq!(rows[2].s0, 2);
        for row in &rows {
            assert!(row.valid);
            assert!(row.h > 0.9, "noiseless full sampling should cover: {row:?}");
        }
        // Threshold above every pixel is an error, as is a mixed-p batch.
        let too_high = vec![ExperimentConfig {
            threshold: 100.0,
            ..base.clone()
        }];
        assert!(run_table(&too_high, &GroundTruthSource::Image(img.clone())).is_err());
        let mixed = vec![
            base.clone(),
            ExperimentConfig {
                p: 32,
                ..base.clone()
            },
        ];
        assert!(run_table(&mixed, &GroundTruthSource::Image(img)).is_err());
    }

    #[test]
    fn noisy_trials_stay_calibrated_in_the_easy_regime() {
        // Moderate size, strong spikes, known noise: disks should cover the
        // truth at roughly the nominal rate and the remainder term should be
        // small relative to the noise term.
        let (beta0, support) = phantom(256, 4, 3000.0, 4000.0, 21).unwrap();
        let config = ExperimentConfig {
            p: 256,
            n_fraction: 0.5,
            sigma: 10.0,
            sigma_known: true,
            alpha: 0.05,
            lambda_multiple: Some(0.25),
            trials: 20,
            master_seed: 77,
            ..ExperimentConfig::default()
        };
        let result = run_experiment(&config, &beta0, &support).unwrap();
        assert!(result.valid);
        let h = result.aggregate.h.mean;
        assert!(h > 0.85, "overall hit rate {h}");
        let hs = result.aggregate.h_s0.unwrap().mean;
        assert!(hs > 0.80, "on-support hit rate {hs}");
        // The debiased centers sit near the truth on the support.
        let worst_support_err = support
            .iter()
            .map(|&k| (result.reconstruction[k] - beta0[k]).norm())
            .fold(0.0f64, f64::max);
        assert!(worst_support_err < 10.0 * result.radius, "{worst_support_err} vs radius {}", result.radius);
        let _ = norm_inf(&result.reconstruction);
    }
}
