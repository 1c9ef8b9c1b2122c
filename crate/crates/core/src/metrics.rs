//! Evaluation and diagnostics: hit rates, SSIM, the exact error
//! decomposition, Monte-Carlo coverage, oracle-rate ratios, and a
//! brute-force restricted-isometry check for tiny instances.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{adjoint, apply_sample_covariance, forward, norm2, norm_inf, SamplingPattern};
use crate::harness::{derive_seed, ExperimentConfig, STREAM_NOISE, STREAM_PATTERN};
use crate::image::RealImage;
use crate::uq::ConfidenceRegions;

/// Exact split of the debiased error into its noise and bias parts.
///
/// With `W = F* eps / sqrt(n)` and `R = -sqrt(n) (C - I)(beta_hat - beta0)`
/// (`C` the sample covariance), the identity
/// `sqrt(n) (beta_u - beta0) = W + R` holds in exact arithmetic;
/// `residual_linf` reports how far floating point strays from it.
#[derive(Debug, Clone, Serialize)]
pub struct DecompositionReport {
    /// Backprojected-noise part, complex Gaussian per coordinate.
    pub w: Vec<Complex64>,
    /// Remainder part that valid inference needs to be small.
    pub r: Vec<Complex64>,
    /// `||R||_inf`.
    pub r_linf: f64,
    /// Max deviation from the exact identity (floating-point slack only).
    pub residual_linf: f64,
}

/// Scalar metrics of a single reconstruction trial.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialMetrics {
    /// Fraction of all coordinates whose truth lies in its disk.
    pub h: f64,
    /// Same fraction restricted to the true support (absent when the truth
    /// has no support).
    pub h_s0: Option<f64>,
    /// Structural similarity between truth and reconstruction magnitudes
    /// (absent when the truth is identically zero).
    pub ssim: Option<f64>,
    /// Remainder size `||R||_inf` from the error decomposition.
    pub r_linf: f64,
    /// Measurement-domain noise-to-signal ratio (absent for zero truth).
    pub relative_noise: Option<f64>,
    /// Penalty level the trial was solved at.
    pub lambda_used: f64,
    /// Noise level used for the disks.
    pub sigma_hat: f64,
    /// Raw hit count over all coordinates.
    pub hits: usize,
    /// Raw hit count over the support.
    pub hits_s0: usize,
    /// Solver iterations spent.
    pub iterations: usize,
    /// Whether the solver certified stationarity.
    pub converged: bool,
}

/// Per-coordinate disk membership of the ground truth.
pub fn hit_indicators(regions: &ConfidenceRegions, beta0: &[Complex64]) -> Result<Vec<bool>> {
    if beta0.len() != regions.center.len() {
        return Err(Error::dims(format!(
            "truth has length {}, regions have {}",
            beta0.len(),
            regions.center.len()
        )));
    }
    Ok(regions
        .center
        .iter()
        .zip(beta0)
        .map(|(c, b)| (c - b).norm() <= regions.radius)
        .collect())
}

/// Overall and on-support hit rates (exact indicator counts).
pub fn hit_rates(
    regions: &ConfidenceRegions,
    beta0: &[Complex64],
    support: &[usize],
) -> Result<(f64, f64)> {
    if support.is_empty() {
        return Err(Error::invalid(
            "on-support hit rate is undefined for an empty support",
        ));
    }
    let hits = hit_indicators(regions, beta0)?;
    if let Some(&bad) = support.iter().find(|&&i| i >= hits.len()) {
        return Err(Error::invalid(format!(
            "support index {bad} out of range for p = {}",
            hits.len()
        )));
    }
    let total = hits.iter().filter(|&&h| h).count();
    let on = support.iter().filter(|&&i| hits[i]).count();
    Ok((
        total as f64 / hits.len() as f64,
        on as f64 / support.len() as f64,
    ))
}

/// Mean local structural similarity over sliding uniform windows.
///
/// Windows are `min(8, rows) x min(8, cols)` with stride 1 and uniform
/// weights; stabilizers are `C1 = (0.01 L)^2`, `C2 = (0.03 L)^2` for the
/// given dynamic range `L`. Inputs are compared as-is (callers pass
/// magnitude images).
pub fn ssim(a: &RealImage, b: &RealImage, dynamic_range: f64) -> Result<f64> {
    if a.rows != b.rows || a.cols != b.cols {
        return Err(Error::dims(format!(
            "image shapes differ: {}x{} vs {}x{}",
            a.rows, a.cols, b.rows, b.cols
        )));
    }
    if !dynamic_range.is_finite() || dynamic_range <= 0.0 {
        return Err(Error::invalid(format!(
            "dynamic range must be > 0, got {dynamic_range}"
        )));
    }
    let wr = a.rows.min(8);
    let wc = a.cols.min(8);
    let c1 = (0.01 * dynamic_range).powi(2);
    let c2 = (0.03 * dynamic_range).powi(2);
    let win = (wr * wc) as f64;

    let mut acc = 0.0;
    let mut count = 0usize;
    for i in 0..=(a.rows - wr) {
        for j in 0..=(a.cols - wc) {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for r in i..i + wr {
                let row_a = &a.data[r * a.cols + j..r * a.cols + j + wc];
                let row_b = &b.data[r * b.cols + j..r * b.cols + j + wc];
                for (&x, &y) in row_a.iter().zip(row_b) {
                    sa += x;
                    sb += y;
                    saa += x * x;
                    sbb += y * y;
                    sab += x * y;
                }
            }
            let ma = sa / win;
            let mb = sb / win;
            let va = saa / win - ma * ma;
            let vb = sbb / win - mb * mb;
            let cov = sab / win - ma * mb;
            let val = ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            acc += val;
            count += 1;
        }
    }
    Ok(acc / count as f64)
}

/// Compute the exact error decomposition for a simulated instance where the
/// ground truth and noise are known.
pub fn decompose(
    pattern: &SamplingPattern,
    y: &[Complex64],
    beta_hat: &[Complex64],
    beta_u: &[Complex64],
    beta0: &[Complex64],
    epsilon: &[Complex64],
) -> Result<DecompositionReport> {
    let p = pattern.p();
    let n = pattern.n();
    if n == 0 {
        return Err(Error::invalid("decomposition requires n >= 1"));
    }
    if y.len() != n || epsilon.len() != n {
        return Err(Error::dims(format!(
            "measurement vectors must have length n = {n}"
        )));
    }
    if beta_hat.len() != p || beta_u.len() != p || beta0.len() != p {
        return Err(Error::dims(format!(
            "coefficient vectors must have length p = {p}"
        )));
    }
    let sqrt_n = (n as f64).sqrt();

    let mut w = adjoint(pattern, epsilon)?;
    for v in &mut w {
        *v /= sqrt_n;
    }

    let d: Vec<Complex64> = beta_hat.iter().zip(beta0).map(|(a, b)| a - b).collect();
    let cd = apply_sample_covariance(pattern, &d)?;
    let r: Vec<Complex64> = cd
        .iter()
        .zip(&d)
        .map(|(c, dk)| (dk - c) * sqrt_n)
        .collect();

    let mut residual_linf = 0.0f64;
    for k in 0..p {
        let lhs = (beta_u[k] - beta0[k]) * sqrt_n;
        residual_linf = residual_linf.max((lhs - w[k] - r[k]).norm());
    }
    let r_linf = norm_inf(&r);
    Ok(DecompositionReport {
        w,
        r,
        r_linf,
        residual_linf,
    })
}

/// Measurement-domain noise-to-signal ratio `||eps|| / ||F beta0||`.
pub fn relative_noise(
    pattern: &SamplingPattern,
    beta0: &[Complex64],
    epsilon: &[Complex64],
) -> Result<f64> {
    if epsilon.len() != pattern.n() {
        return Err(Error::dims(format!(
            "epsilon has length {}, pattern has n = {}",
            epsilon.len(),
            pattern.n()
        )));
    }
    let clean = forward(pattern, beta0)?;
    let denom = norm2(&clean);
    if denom == 0.0 {
        return Err(Error::invalid(
            "relative noise is undefined for zero clean measurements",
        ));
    }
    Ok(norm2(epsilon) / denom)
}

/// Measured constants of the sparse-recovery error rates: returns
/// `(c2, c1)` with `c2 = ||d||_2 sqrt(n) / sqrt(s0 ln p)` and
/// `c1 = ||d||_1 sqrt(n) / (s0 sqrt(ln p))` for `d = beta_hat - beta0`.
/// Diagnostics only; no pass/fail judgement is made here.
pub fn oracle_error_check(
    beta_hat: &[Complex64],
    beta0: &[Complex64],
    s0: usize,
    n: usize,
    p: usize,
) -> Result<(f64, f64)> {
    if beta_hat.len() != beta0.len() {
        return Err(Error::dims("estimate and truth lengths differ"));
    }
    if s0 == 0 {
        return Err(Error::invalid("s0 must be >= 1"));
    }
    if n == 0 {
        return Err(Error::invalid("n must be >= 1"));
    }
    if p < 2 {
        return Err(Error::invalid("p must be >= 2"));
    }
    let d: Vec<Complex64> = beta_hat.iter().zip(beta0).map(|(a, b)| a - b).collect();
    let l2 = norm2(&d);
    let l1: f64 = d.iter().map(|z| z.norm()).sum();
    let ln_p = (p as f64).ln();
    let sqrt_n = (n as f64).sqrt();
    let c2 = l2 * sqrt_n / (s0 as f64 * ln_p).sqrt();
    let c1 = l1 * sqrt_n / (s0 as f64 * ln_p.sqrt());
    Ok((c2, c1))
}

/// Binomial coefficient for `s <= p`, saturating far above the cap.
fn binomial(p: usize, s: usize) -> u128 {
    let s = s.min(p - s);
    let mut acc: u128 = 1;
    for i in 0..s {
        acc = acc.saturating_mul((p - i) as u128) / (i as u128 + 1);
        if acc > u128::from(u64::MAX) {
            return acc;
        }
    }
    acc
}

/// Advance a lexicographic size-`s` combination over `0..p`; false when done.
fn next_combination(idx: &mut [usize], p: usize) -> bool {
    let s = idx.len();
    let mut i = s;
    while i > 0 {
        i -= 1;
        if idx[i] != i + p - s {
            idx[i] += 1;
            for j in i + 1..s {
                idx[j] = idx[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// All eigenvalues of a small real symmetric matrix by cyclic Jacobi
/// rotations. Deterministic; intended for matrices of dimension <= ~16.
fn symmetric_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let m = a.len();
    if m == 0 {
        return Vec::new();
    }
    let frob: f64 = a
        .iter()
        .flat_map(|row| row.iter().map(|v| v * v))
        .sum::<f64>()
        .sqrt();
    let tol = 1e-15 * frob.max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for i in 0..m {
            for j in (i + 1)..m {
                off += a[i][j] * a[i][j];
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for i in 0..m {
            for j in (i + 1)..m {
                let apq = a[i][j];
                if apq.abs() <= tol / (m as f64) {
                    continue;
                }
                let theta = (a[j][j] - a[i][i]) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // Rotate rows/columns i and j.
                for k in 0..m {
                    let aik = a[i][k];
                    let ajk = a[j][k];
                    a[i][k] = c * aik - s * ajk;
                    a[j][k] = s * aik + c * ajk;
                }
                for k in 0..m {
                    let aki = a[k][i];
                    let akj = a[k][j];
                    a[k][i] = c * aki - s * akj;
                    a[k][j] = s * aki + c * akj;
                }
            }
        }
    }
    (0..m).map(|i| a[i][i]).collect()
}

/// Extreme eigenvalues of a small Hermitian matrix via the real symmetric
/// embedding `[[X, -Y], [Y, X]]` (eigenvalues appear twice; min/max survive).
fn hermitian_extremes(g: &[Vec<Complex64>]) -> (f64, f64) {
    let s = g.len();
    let mut m = vec![vec![0.0f64; 2 * s]; 2 * s];
    for i in 0..s {
        for j in 0..s {
            m[i][j] = g[i][j].re;
            m[i][j + s] = -g[i][j].im;
            m[i + s][j] = g[i][j].im;
            m[i + s][j + s] = g[i][j].re;
        }
    }
    let eig = symmetric_eigenvalues(m);
    let lo = eig.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Worst-case isometry defect over all size-`s` column subsets of an
/// explicitly given (already column-normalized) matrix: the maximum of
/// `max(lambda_max - 1, 1 - lambda_min)` of subset Gram matrices.
///
/// Enumeration is refused when `C(p, s)` exceeds 10^6.
pub fn rip_bruteforce(dense: &[Vec<Complex64>], s: usize) -> Result<f64> {
    if dense.is_empty() {
        return Err(Error::invalid("matrix must have at least one row"));
    }
    let p = dense[0].len();
    if p == 0 || dense.iter().any(|row| row.len() != p) {
        return Err(Error::dims("matrix rows must be non-empty and equal-length"));
    }
    if s == 0 || s > p {
        return Err(Error::invalid(format!(
            "subset size must satisfy 1 <= s <= {p}, got {s}"
        )));
    }
    const CAP: u128 = 1_000_000;
    let count = binomial(p, s);
    if count > CAP {
        return Err(Error::TooLarge(format!(
            "C({p}, {s}) = {count} exceeds the enumeration cap {CAP}"
        )));
    }

    // Full Gram matrix once; subsets index into it.
    let mut gram = vec![vec![Complex64::new(0.0, 0.0); p]; p];
    for i in 0..p {
        for j in i..p {
            let mut acc = Complex64::new(0.0, 0.0);
            for row in dense {
                acc += row[i].conj() * row[j];
            }
            gram[i][j] = acc;
            gram[j][i] = acc.conj();
        }
    }

    let mut idx: Vec<usize> = (0..s).collect();
    let mut delta = 0.0f64;
    loop {
        let sub: Vec<Vec<Complex64>> = idx
            .iter()
            .map(|&i| idx.iter().map(|&j| gram[i][j]).collect())
            .collect();
        let (lo, hi) = hermitian_extremes(&sub);
        delta = delta.max((hi - 1.0).max(1.0 - lo));
        if !next_combination(&mut idx, p) {
            break;
        }
    }
    Ok(delta)
}

/// Per-coordinate empirical coverage over independent trials.
#[derive(Debug, Clone, Serialize)]
pub struct CoverageReport {
    /// Fraction of successful trials covering the truth, per coordinate.
    pub per_coordinate: Vec<f64>,
    /// Mean coverage over all coordinates.
    pub overall: f64,
    /// Mean coverage over the support (absent when the support is empty).
    pub on_support: Option<f64>,
    /// Mean coverage off the support (absent when the support is everything).
    pub off_support: Option<f64>,
    /// Trials requested.
    pub trials: usize,
    /// Trials that completed successfully and entered the averages.
    pub trials_used: usize,
}

/// Run `trials` fresh simulation trials of the full pipeline at level
/// `alpha` and tabulate how often each coordinate's disk covers the truth.
pub fn empirical_coverage(
    config: &ExperimentConfig,
    beta0: &[Complex64],
    support: &[usize],
    trials: usize,
    alpha: f64,
) -> Result<CoverageReport> {
    if trials == 0 {
        return Err(Error::invalid("at least one trial is required"));
    }
    let mut cfg = config.clone();
    cfg.alpha = alpha;
    cfg.trials = trials;
    cfg.validate()?;
    if beta0.len() != cfg.p {
        return Err(Error::dims(format!(
            "truth has length {}, config has p = {}",
            beta0.len(),
            cfg.p
        )));
    }

    let outcomes: Vec<Option<Vec<bool>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            crate::harness::run_trial(&cfg, beta0, support, t)
                .ok()
                .and_then(|out| hit_indicators(&out.regions, beta0).ok())
        })
        .collect();

    let mut counts = vec![0usize; cfg.p];
    let mut used = 0usize;
    for hits in outcomes.into_iter().flatten() {
        used += 1;
        for (c, h) in counts.iter_mut().zip(hits) {
            if h {
                *c += 1;
            }
        }
    }
    if used == 0 {
        return Err(Error::Numerical {
            iteration: 0,
            message: "no coverage trial completed successfully".into(),
        });
    }
    let per_coordinate: Vec<f64> = counts.iter().map(|&c| c as f64 / used as f64).collect();
    let overall = per_coordinate.iter().sum::<f64>() / cfg.p as f64;
    let mut is_support = vec![false; cfg.p];
    for &i in support {
        if i >= cfg.p {
            return Err(Error::invalid(format!(
                "support index {i} out of range for p = {}",
                cfg.p
            )));
        }
        is_support[i] = true;
    }
    let s0 = support.len();
    let on_support = if s0 > 0 {
        Some(support.iter().map(|&i| per_coordinate[i]).sum::<f64>() / s0 as f64)
    } else {
        None
    };
    let off_count = cfg.p - s0;
    let off_support = if off_count > 0 {
        Some(
            per_coordinate
                .iter()
                .enumerate()
                .filter(|(i, _)| !is_support[*i])
                .map(|(_, &v)| v)
                .sum::<f64>()
                / off_count as f64,
        )
    } else {
        None
    };
    Ok(CoverageReport {
        per_coordinate,
        overall,
        on_support,
        off_support,
        trials,
        trials_used: used,
    })
}

/// One sample-size point of the remainder-decay study.
#[derive(Debug, Clone, Serialize)]
pub struct BiasDecayPoint {
    /// Number of measurements this point was run at.
    pub n: usize,
    /// Median of `||R||_inf` across seeds.
    pub median_r_linf: f64,
    /// Mean of `||R||_inf` across seeds.
    pub mean_r_linf: f64,
    /// The individual per-seed values, in seed order.
    pub values: Vec<f64>,
}

/// Measure how the remainder term shrinks as the number of measurements
/// grows: for each `n` in `n_values`, run `seeds` independent instances
/// against the fixed truth and record `||R||_inf`.
///
/// The penalty follows the config's fixed multiple (cross-validation is not
/// used here) and the config's `sigma` is treated as known.
pub fn bias_decay_study(
    config: &ExperimentConfig,
    beta0: &[Complex64],
    n_values: &[usize],
    seeds: usize,
) -> Result<Vec<BiasDecayPoint>> {
    config.validate()?;
    if beta0.len() != config.p {
        return Err(Error::dims(format!(
            "truth has length {}, config has p = {}",
            beta0.len(),
            config.p
        )));
    }
    if n_values.is_empty() || seeds == 0 {
        return Err(Error::invalid("need at least one n value and one seed"));
    }
    let multiple = config.lambda_multiple.ok_or_else(|| {
        Error::invalid("the decay study requires a fixed penalty multiple")
    })?;

    let jobs: Vec<(usize, usize)> = (0..n_values.len())
        .flat_map(|i| (0..seeds).map(move |s| (i, s)))
        .collect();
    let values: Vec<((usize, usize), Result<f64>)> = jobs
        .par_iter()
        .map(|&(i, s)| {
            let n = n_values[i];
            let run = || -> Result<f64> {
                if n == 0 {
                    return Err(Error::invalid("n must be >= 1"));
                }
                let stream = (i as u64) << 32 | s as u64;
                let pattern = config.draw_pattern_n(n, derive_seed(config.master_seed, STREAM_PATTERN, stream))?;
                let eps = crate::harness::generate_noise(
                    n,
                    config.sigma,
                    derive_seed(config.master_seed, STREAM_NOISE, stream),
                )?;
                let clean = forward(&pattern, beta0)?;
                let y: Vec<Complex64> = clean.iter().zip(&eps).map(|(a, b)| a + b).collect();
                let lam = multiple * crate::uq::lambda0(config.sigma, config.k_bound, n, config.p)?;
                let sol = crate::lasso::solve_classo(
                    &pattern,
                    &y,
                    lam,
                    &crate::lasso::SolverOptions::default(),
                )?;
                let est = crate::uq::debias(&pattern, &y, &sol.beta_hat)?;
                let report = decompose(&pattern, &y, &sol.beta_hat, &est.beta_u, beta0, &eps)?;
                Ok(report.r_linf)
            };
            ((i, s), run())
        })
        .collect();

    let mut points = Vec::with_capacity(n_values.len());
    for (i, &n) in n_values.iter().enumerate() {
        let mut vals = Vec::with_capacity(seeds);
        for &((pi, _), ref v) in values.iter().filter(|((pi, _), _)| *pi == i) {
            debug_assert_eq!(pi, i);
            match v {
                Ok(x) => vals.push(*x),
                Err(e) => {
                    return Err(Error::Numerical {
                        iteration: 0,
                        message: format!("decay study instance (n = {n}) failed: {e}"),
                    })
                }
            }
        }
        let mut sorted = vals.clone();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len();
        let median = if m % 2 == 1 {
            sorted[m / 2]
        } else {
            0.5 * (sorted[m / 2 - 1] + sorted[m / 2])
        };
        let mean = vals.iter().sum::<f64>() / m as f64;
        points.push(BiasDecayPoint {
            n,
            median_r_linf: median,
            mean_r_linf: mean,
            values: vals,
        });
    }
    Ok(points)
}
