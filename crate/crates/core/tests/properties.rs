//! Randomized invariant checks for the operator, the solver, and the
//! scoring utilities.

use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use csuq_core::fourier::{
    adjoint, apply_sample_covariance, dense_matrix, forward, inner, norm2, norm_inf,
    sample_pattern, SamplingPattern,
};
use csuq_core::harness::{generate_noise, phantom, sparsify_threshold};
use csuq_core::image::RealImage;
use csuq_core::lasso::{solve_classo, soft_threshold_complex, SolverOptions};
use csuq_core::metrics::{decompose, relative_noise, rip_bruteforce, ssim};
use csuq_core::uq::{debias, estimate_noise, lambda0, radius};

fn vec_from_seed(seed: u64, len: usize, scale: f64) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len)
        .map(|_| {
            Complex64::new(
                rng.gen_range(-scale..scale),
                rng.gen_range(-scale..scale),
            )
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    /// <F beta, y> = <beta, F* y> for every pattern and pair of vectors.
    #[test]
    fn adjoint_identity_holds(p in 2usize..=64, extra in 0usize..=64, seed: u64) {
        let n = 1 + extra;
        let pattern = sample_pattern(p, n, seed).unwrap();
        let beta = vec_from_seed(seed ^ 1, p, 1.0);
        let y = vec_from_seed(seed ^ 2, n, 1.0);
        let lhs = inner(&forward(&pattern, &beta).unwrap(), &y);
        let rhs = inner(&beta, &adjoint(&pattern, &y).unwrap());
        prop_assert!((lhs - rhs).norm() <= 1e-10 * norm2(&beta) * norm2(&y));
    }

    /// The FFT-backed forward agrees entrywise with the explicit matrix.
    #[test]
    fn forward_matches_dense(p in 2usize..=32, extra in 0usize..=32, seed: u64) {
        let n = 1 + extra;
        let pattern = sample_pattern(p, n, seed).unwrap();
        let beta = vec_from_seed(seed ^ 3, p, 1.0);
        let fwd = forward(&pattern, &beta).unwrap();
        let dense = dense_matrix(&pattern).unwrap();
        for (l, row) in dense.iter().enumerate() {
            let direct: Complex64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            prop_assert!((direct - fwd[l]).norm() <= 1e-9);
        }
    }

    /// The operator is linear to float precision.
    #[test]
    fn forward_is_linear(p in 2usize..=64, extra in 0usize..=32, seed: u64,
                         ar in -2.0f64..2.0, ai in -2.0f64..2.0,
                         br in -2.0f64..2.0, bi in -2.0f64..2.0) {
        let n = 1 + extra;
        let a = Complex64::new(ar, ai);
        let b = Complex64::new(br, bi);
        let pattern = sample_pattern(p, n, seed).unwrap();
        let u = vec_from_seed(seed ^ 4, p, 1.0);
        let v = vec_from_seed(seed ^ 5, p, 1.0);
        let combo: Vec<Complex64> = u.iter().zip(&v).map(|(x, y)| a * x + b * y).collect();
        let left = forward(&pattern, &combo).unwrap();
        let fu = forward(&pattern, &u).unwrap();
        let fv = forward(&pattern, &v).unwrap();
        let scale = (a.norm() + b.norm()) * (p as f64);
        for l in 0..n {
            prop_assert!((left[l] - (a * fu[l] + b * fv[l])).norm() <= 1e-12 * scale.max(1.0));
        }
    }

    /// The sample covariance has an exactly unit diagonal.
    #[test]
    fn covariance_diagonal_is_one(p in 2usize..=64, extra in 0usize..=64, seed: u64, k_pick: u64) {
        let n = 1 + extra;
        let pattern = sample_pattern(p, n, seed).unwrap();
        let k = (k_pick % p as u64) as usize;
        let mut e_k = vec![Complex64::new(0.0, 0.0); p];
        e_k[k] = Complex64::new(1.0, 0.0);
        let col = apply_sample_covariance(&pattern, &e_k).unwrap();
        prop_assert!((col[k] - Complex64::new(1.0, 0.0)).norm() <= 1e-12);
    }

    /// Shrinkage keeps the phase, shrinks the magnitude by exactly t, and
    /// zeroes everything inside the threshold.
    #[test]
    fn shrinkage_is_a_radial_contraction(zr in -5.0f64..5.0, zi in -5.0f64..5.0, t in 0.0f64..3.0) {
        let z = Complex64::new(zr, zi);
        let w = soft_threshold_complex(z, t);
        let expect_mag = (z.norm() - t).max(0.0);
        prop_assert!((w.norm() - expect_mag).abs() <= 1e-12 * (1.0 + z.norm()));
        if z.norm() <= t {
            prop_assert_eq!(w, Complex64::new(0.0, 0.0));
        } else {
            // Same phase: w is a positive real multiple of z.
            let cross = w.re * z.im - w.im * z.re;
            prop_assert!(cross.abs() <= 1e-12 * (1.0 + z.norm()).powi(2));
            prop_assert!(w.re * z.re + w.im * z.im >= 0.0);
        }
    }

    /// Rotating the input rotates the shrinkage output by the same phase.
    #[test]
    fn shrinkage_is_phase_equivariant(zr in -5.0f64..5.0, zi in -5.0f64..5.0,
                                      t in 0.0f64..3.0, phi in 0.0f64..6.2831853) {
        let z = Complex64::new(zr, zi);
        let rot = Complex64::from_polar(1.0, phi);
        let a = soft_threshold_complex(z * rot, t);
        let b = soft_threshold_complex(z, t) * rot;
        prop_assert!((a - b).norm() <= 1e-12 * (1.0 + z.norm()));
    }

    /// Pattern serialization round-trips exactly.
    #[test]
    fn pattern_serialization_round_trips(p in 1usize..=128, extra in 0usize..=128, seed: u64) {
        let n = extra; // n = 0 is legal for patterns
        let pattern = sample_pattern(p, n, seed).unwrap();
        let text = pattern.to_json().unwrap();
        let back = SamplingPattern::from_json(&text).unwrap();
        prop_assert_eq!(back, pattern);
    }

    /// Thresholding keeps exactly the pixels at or above the threshold.
    #[test]
    fn sparsify_matches_its_definition(seed: u64, thr in 0.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..24).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let img = RealImage::new(4, 6, data.clone()).unwrap();
        let (beta0, support, s0) = sparsify_threshold(&img, thr).unwrap();
        prop_assert_eq!(s0, support.len());
        for (i, &v) in data.iter().enumerate() {
            if v.abs() < thr {
                prop_assert_eq!(beta0[i], Complex64::new(0.0, 0.0));
                prop_assert!(!support.contains(&i));
            } else {
                prop_assert_eq!(beta0[i], Complex64::new(v, 0.0));
                prop_assert!(support.contains(&i));
            }
        }
    }

    /// The base penalty level is linear in sigma and halves when n
    /// quadruples.
    #[test]
    fn penalty_level_scales(sigma in 0.0f64..1e4, n in 1usize..=10_000, p in 2usize..=100_000,
                            c in 0.1f64..10.0) {
        let l = lambda0(sigma, 1.0, n, p).unwrap();
        let lc = lambda0(c * sigma, 1.0, n, p).unwrap();
        prop_assert!((lc - c * l).abs() <= 1e-12 * lc.abs().max(1e-300));
        let l4 = lambda0(sigma, 1.0, 4 * n, p).unwrap();
        prop_assert!((l4 - 0.5 * l).abs() <= 1e-12 * l.abs().max(1e-300));
    }

    /// The disk radius shrinks in alpha and scales exactly as 1/sqrt(n).
    #[test]
    fn radius_is_monotone_and_scales(sigma in 0.0f64..1e4, n in 1usize..=10_000,
                                     a1 in 0.01f64..0.4, da in 0.01f64..0.5) {
        let a2 = (a1 + da).min(0.99);
        let r1 = radius(sigma, n, a1).unwrap();
        let r2 = radius(sigma, n, a2).unwrap();
        prop_assert!(r2 <= r1 + 1e-12);
        let r4 = radius(sigma, 4 * n, a1).unwrap();
        prop_assert!((r4 - 0.5 * r1).abs() <= 1e-12 * r1.max(1e-300));
    }

    /// The noise/bias split identity holds for arbitrary estimates, not just
    /// solver output.
    #[test]
    fn error_split_identity_for_any_estimate(p in 2usize..=64, extra in 0usize..=64, seed: u64) {
        let n = 1 + extra;
        let pattern = sample_pattern(p, n, seed).unwrap();
        let beta0 = vec_from_seed(seed ^ 6, p, 3.0);
        let eps = generate_noise(n, 0.7, seed ^ 7).unwrap();
        let clean = forward(&pattern, &beta0).unwrap();
        let y: Vec<Complex64> = clean.iter().zip(&eps).map(|(a, b)| a + b).collect();
        let beta_hat = vec_from_seed(seed ^ 8, p, 3.0);
        let est = debias(&pattern, &y, &beta_hat).unwrap();
        let rep = decompose(&pattern, &y, &beta_hat, &est.beta_u, &beta0, &eps).unwrap();
        prop_assert!(rep.residual_linf <= 1e-8 * norm_inf(&beta0).max(1.0));
    }

    /// Scaling the noise scales the noise-to-signal ratio linearly, and an
    /// interpolating fit has zero estimated noise.
    #[test]
    fn noise_ratios_are_homogeneous(p in 4usize..=64, seed: u64, c in 0.1f64..10.0) {
        let n = p / 2 + 1;
        let pattern = sample_pattern(p, n, seed).unwrap();
        let (beta0, _) = phantom(p, 2, 1.0, 2.0, seed ^ 9).unwrap();
        let eps = generate_noise(n, 0.5, seed ^ 10).unwrap();
        let r1 = relative_noise(&pattern, &beta0, &eps).unwrap();
        let eps_c: Vec<Complex64> = eps.iter().map(|z| z * c).collect();
        let rc = relative_noise(&pattern, &beta0, &eps_c).unwrap();
        prop_assert!((rc - c * r1).abs() <= 1e-10 * rc.max(1e-300));

        let y = forward(&pattern, &beta0).unwrap();
        let s = estimate_noise(&pattern, &y, &beta0).unwrap();
        prop_assert!(s <= 1e-10 * norm2(&y).max(1.0));
    }

    /// Structural similarity is symmetric, maximal on identical images, and
    /// never exceeds one.
    #[test]
    fn ssim_is_symmetric_and_bounded(seed: u64, l in 0.5f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a_data: Vec<f64> = (0..60).map(|_| rng.gen_range(0.0..l)).collect();
        let b_data: Vec<f64> = (0..60).map(|_| rng.gen_range(0.0..l)).collect();
        let a = RealImage::new(6, 10, a_data).unwrap();
        let b = RealImage::new(6, 10, b_data).unwrap();
        let ab = ssim(&a, &b, l).unwrap();
        let ba = ssim(&b, &a, l).unwrap();
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!(ab <= 1.0 + 1e-12);
        prop_assert!(ab >= -1.0 - 1e-12);
        prop_assert!((ssim(&a, &a, l).unwrap() - 1.0).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    /// Rotating the measurements by a global phase rotates the solution by
    /// the same phase.
    #[test]
    fn solver_is_phase_equivariant(seed: u64, phi in 0.0f64..6.2831853) {
        let p = 16;
        let n = 8;
        let pattern = sample_pattern(p, n, seed).unwrap();
        let (beta0, _) = phantom(p, 2, 1.0, 2.0, seed ^ 11).unwrap();
        let eps = generate_noise(n, 0.05, seed ^ 12).unwrap();
        let clean = forward(&pattern, &beta0).unwrap();
        let y: Vec<Complex64> = clean.iter().zip(&eps).map(|(a, b)| a + b).collect();
        let rot = Complex64::from_polar(1.0, phi);
        let y_rot: Vec<Complex64> = y.iter().map(|v| v * rot).collect();
        let lam = 0.25 * lambda0(0.05, 1.0, n, p).unwrap();
        let opts = SolverOptions { max_iters: 300, ..SolverOptions::default() };
        let a = solve_classo(&pattern, &y, lam, &opts).unwrap();
        let b = solve_classo(&pattern, &y_rot, lam, &opts).unwrap();
        let scale = norm_inf(&a.beta_hat).max(1.0);
        for k in 0..p {
            prop_assert!((b.beta_hat[k] - a.beta_hat[k] * rot).norm() <= 1e-12 * scale);
        }
    }

    /// Scaling measurements and penalty together scales the solution.
    #[test]
    fn solver_is_scale_covariant(seed: u64, c in 0.2f64..5.0) {
        let p = 16;
        let n = 8;
        let pattern = sample_pattern(p, n, seed).unwrap();
        let (beta0, _) = phantom(p, 2, 1.0, 2.0, seed ^ 13).unwrap();
        let eps = generate_noise(n, 0.05, seed ^ 14).unwrap();
        let clean = forward(&pattern, &beta0).unwrap();
        let y: Vec<Complex64> = clean.iter().zip(&eps).map(|(a, b)| a + b).collect();
        let y_c: Vec<Complex64> = y.iter().map(|v| v * c).collect();
        let lam = 0.25 * lambda0(0.05, 1.0, n, p).unwrap();
        let opts = SolverOptions::default();
        let a = solve_classo(&pattern, &y, lam, &opts).unwrap();
        let b = solve_classo(&pattern, &y_c, c * lam, &opts).unwrap();
        let scale = c * norm_inf(&a.beta_hat).max(1.0);
        for k in 0..p {
            prop_assert!((b.beta_hat[k] - a.beta_hat[k] * c).norm() <= 1e-6 * scale);
        }
    }

    /// The reported objective never exceeds any traced objective, and the
    /// trace starts at the zero initializer.
    #[test]
    fn solver_returns_the_best_objective(seed: u64) {
        let p = 32;
        let n = 16;
        let pattern = sample_pattern(p, n, seed).unwrap();
        let (beta0, _) = phantom(p, 3, 1.0, 2.0, seed ^ 15).unwrap();
        let eps = generate_noise(n, 0.1, seed ^ 16).unwrap();
        let clean = forward(&pattern, &beta0).unwrap();
        let y: Vec<Complex64> = clean.iter().zip(&eps).map(|(a, b)| a + b).collect();
        let lam = 0.5 * lambda0(0.1, 1.0, n, p).unwrap();
        let sol = solve_classo(&pattern, &y, lam, &SolverOptions::default()).unwrap();
        prop_assert_eq!(sol.trace[0].iteration, 0);
        for tp in &sol.trace {
            prop_assert!(sol.objective <= tp.objective + 1e-12 * tp.objective.abs().max(1.0));
        }
    }

    /// The FFT-based gradient agrees with dense-matrix arithmetic.
    #[test]
    fn gradient_matches_dense(p in 2usize..=64, seed: u64) {
        let n = p / 2 + 1;
        let pattern = sample_pattern(p, n, seed).unwrap();
        let x = vec_from_seed(seed ^ 17, p, 2.0);
        let y = vec_from_seed(seed ^ 18, n, 2.0);
        // FFT path: F*(F x - y) / n.
        let fx = forward(&pattern, &x).unwrap();
        let r: Vec<Complex64> = fx.iter().zip(&y).map(|(a, b)| a - b).collect();
        let mut g = adjoint(&pattern, &r).unwrap();
        for v in &mut g {
            *v /= n as f64;
        }
        // Dense path.
        let dense = dense_matrix(&pattern).unwrap();
        for k in 0..p {
            let mut acc = Complex64::new(0.0, 0.0);
            for (l, row) in dense.iter().enumerate() {
                let pred: Complex64 = row.iter().zip(&x).map(|(a, b)| a * b).sum();
                acc += row[k].conj() * (pred - y[l]);
            }
            prop_assert!((acc / n as f64 - g[k]).norm() <= 1e-6);
        }
    }

    /// The worst-case isometry defect is non-decreasing in the subset size.
    #[test]
    fn isometry_defect_is_monotone(seed: u64) {
        let p = 8;
        let n = 6;
        let pattern = sample_pattern(p, n, seed).unwrap();
        let scale = 1.0 / (n as f64).sqrt();
        let dense: Vec<Vec<Complex64>> = dense_matrix(&pattern)
            .unwrap()
            .into_iter()
            .map(|row| row.into_iter().map(|z| z * scale).collect())
            .collect();
        let d1 = rip_bruteforce(&dense, 1).unwrap();
        let d2 = rip_bruteforce(&dense, 2).unwrap();
        let d3 = rip_bruteforce(&dense, 3).unwrap();
        prop_assert!(d1 <= d2 + 1e-12);
        prop_assert!(d2 <= d3 + 1e-12);
    }
}
