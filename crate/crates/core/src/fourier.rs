//! Subsampled Fourier measurement operator.
//!
//! The operator maps a coefficient vector `beta` of length `p` to `n`
//! measurements by evaluating the unnormalized inverse-convention DFT
//! at a list of sampled frequency rows:
//!
//! ```text
//! (F beta)_l = sum_k beta_k * exp(+2*pi*i * indices[l] * k / p)
//! ```
//!
//! Rows are drawn uniformly from `0..p`, either with replacement (the
//! default measurement model) or as a sorted set of distinct rows. Both the
//! forward map and its adjoint are applied with a full-length FFT plus a
//! gather/scatter, so a single application costs `O(p log p)` regardless of
//! how many rows repeat.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// Hard cap on `n * p` for dense materialization (tests and diagnostics only).
pub const DENSE_ENTRY_CAP: u64 = 1 << 22;

/// Retrieve an FFT plan from the process-wide plan cache.
fn cached_plan(len: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    let planner = PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()));
    let mut guard = planner.lock().expect("FFT planner lock poisoned");
    guard.plan_fft(len, direction)
}

/// A set of sampled frequency rows defining one measurement operator.
///
/// `indices` may contain repeats (sampling with replacement); the row order
/// is part of the operator's identity and is preserved by serialization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplingPattern {
    p: usize,
    indices: Vec<usize>,
    seed: Option<u64>,
}

/// Serialized form: explicit `n` and stable field order.
#[derive(Serialize, Deserialize)]
struct PatternRecord {
    p: usize,
    n: usize,
    seed: Option<u64>,
    indices: Vec<usize>,
}

impl SamplingPattern {
    /// Build a pattern from explicit rows. Every index must lie in `0..p`.
    pub fn from_indices(p: usize, indices: Vec<usize>, seed: Option<u64>) -> Result<Self> {
        if p == 0 {
            return Err(Error::invalid("ambient dimension p must be >= 1"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= p) {
            return Err(Error::invalid(format!(
                "row index {bad} out of range for p = {p}"
            )));
        }
        Ok(SamplingPattern { p, indices, seed })
    }

    /// Ambient dimension `p`.
    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of measurements `n` (rows, counting repeats).
    pub fn n(&self) -> usize {
        self.indices.len()
    }

    /// The sampled rows in measurement order.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// The seed this pattern was drawn from, if it was drawn rather than given.
    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Restrict the pattern to a subset of its measurement rows
    /// (used by cross-validation folds). `rows` index into `0..n`.
    pub fn subset(&self, rows: &[usize]) -> Result<SamplingPattern> {
        let picked: Vec<usize> = rows
            .iter()
            .map(|&r| {
                self.indices
                    .get(r)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("row {r} out of range for n = {}", self.n())))
            })
            .collect::<Result<_>>()?;
        SamplingPattern::from_indices(self.p, picked, None)
    }

    /// Serialize as structured text (`{p, n, seed, indices}`).
    pub fn to_json(&self) -> Result<String> {
        let rec = PatternRecord {
            p: self.p,
            n: self.n(),
            seed: self.seed,
            indices: self.indices.clone(),
        };
        Ok(serde_json::to_string(&rec)?)
    }

    /// Parse and validate the structured-text form.
    ///
    /// Rejects records whose `n` disagrees with the index list or whose
    /// indices fall outside `0..p`.
    pub fn from_json(text: &str) -> Result<Self> {
        let rec: PatternRecord = serde_json::from_str(text)?;
        if rec.n != rec.indices.len() {
            return Err(Error::invalid(format!(
                "pattern record claims n = {} but carries {} indices",
                rec.n,
                rec.indices.len()
            )));
        }
        SamplingPattern::from_indices(rec.p, rec.indices, rec.seed)
    }
}

/// Draw `n` rows uniformly from `0..p` **with replacement** (`n = 0` gives
/// the empty pattern; `n > p` is permitted).
pub fn sample_pattern(p: usize, n: usize, seed: u64) -> Result<SamplingPattern> {
    if p == 0 {
        return Err(Error::invalid("ambient dimension p must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices: Vec<usize> = (0..n).map(|_| rng.gen_range(0..p as u64) as usize).collect();
    SamplingPattern::from_indices(p, indices, Some(seed))
}

/// Draw `n` **distinct** rows uniformly from `0..p`, returned sorted ascending.
pub fn sample_pattern_distinct(p: usize, n: usize, seed: u64) -> Result<SamplingPattern> {
    if p == 0 {
        return Err(Error::invalid("ambient dimension p must be >= 1"));
    }
    if n > p {
        return Err(Error::invalid(format!(
            "cannot draw {n} distinct rows from 0..{p}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = rand::seq::index::sample(&mut rng, p, n).into_vec();
    indices.sort_unstable();
    SamplingPattern::from_indices(p, indices, Some(seed))
}

/// Apply the forward operator: `beta` (length `p`) to `n` measurements.
pub fn forward(pattern: &SamplingPattern, beta: &[Complex64]) -> Result<Vec<Complex64>> {
    if beta.len() != pattern.p {
        return Err(Error::dims(format!(
            "forward: beta has length {}, pattern has p = {}",
            beta.len(),
            pattern.p
        )));
    }
    // Unnormalized positive-exponent DFT of beta, evaluated everywhere...
    let mut buf = beta.to_vec();
    cached_plan(pattern.p, FftDirection::Inverse).process(&mut buf);
    // ...then gathered at the sampled rows.
    Ok(pattern.indices.iter().map(|&i| buf[i]).collect())
}

/// Apply the adjoint operator: `y` (length `n`) to a length-`p` vector.
///
/// Repeated rows accumulate, so `adjoint` is the exact conjugate transpose
/// of [`forward`] including multiplicity.
pub fn adjoint(pattern: &SamplingPattern, y: &[Complex64]) -> Result<Vec<Complex64>> {
    if y.len() != pattern.n() {
        return Err(Error::dims(format!(
            "adjoint: y has length {}, pattern has n = {}",
            y.len(),
            pattern.n()
        )));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); pattern.p];
    for (&row, &val) in pattern.indices.iter().zip(y) {
        buf[row] += val;
    }
    cached_plan(pattern.p, FftDirection::Forward).process(&mut buf);
    Ok(buf)
}

/// Apply the sample covariance `adjoint(forward(v)) / n` in `O(p log p)`.
///
/// Its diagonal equals 1 exactly for any pattern, and for a full distinct
/// pattern (`n = p`) the whole matrix is the identity.
pub fn apply_sample_covariance(pattern: &SamplingPattern, v: &[Complex64]) -> Result<Vec<Complex64>> {
    if pattern.n() == 0 {
        return Err(Error::invalid(
            "sample covariance is undefined for an empty pattern (n = 0)",
        ));
    }
    let meas = forward(pattern, v)?;
    let mut out = adjoint(pattern, &meas)?;
    let scale = 1.0 / pattern.n() as f64;
    for z in &mut out {
        *z *= scale;
    }
    Ok(out)
}

/// Materialize the operator as a dense row-major matrix (tests/diagnostics).
///
/// Capped at [`DENSE_ENTRY_CAP`] entries; returns `Error::TooLarge` beyond.
pub fn dense_matrix(pattern: &SamplingPattern) -> Result<Vec<Vec<Complex64>>> {
    let entries = pattern.n() as u64 * pattern.p as u64;
    if entries > DENSE_ENTRY_CAP {
        return Err(Error::TooLarge(format!(
            "dense matrix would hold {entries} entries (cap {DENSE_ENTRY_CAP})"
        )));
    }
    let p = pattern.p as f64;
    let rows = pattern
        .indices
        .iter()
        .map(|&row| {
            (0..pattern.p)
                .map(|k| {
                    let angle = 2.0 * std::f64::consts::PI * (row as f64) * (k as f64) / p;
                    Complex64::new(angle.cos(), angle.sin())
                })
                .collect()
        })
        .collect();
    Ok(rows)
}

/// Euclidean norm of a complex vector.
pub fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Max modulus of a complex vector (0 for the empty vector).
pub fn norm_inf(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Inner product `<a, b> = sum conj(a_k) b_k`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}
