//! The five subcommands: ground-truth resolution, pipeline invocation, and
//! output emission.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use num_complex::Complex64;
use serde_json::json;

use csuq_core::fourier::dense_matrix;
use csuq_core::harness::{
    derive_seed, phantom as sample_phantom, run_experiment, run_table, run_trial,
    sparsify_threshold, GroundTruthSource, STREAM_PHANTOM,
};
use csuq_core::image::{image_dims, load_csv, load_pgm, magnitude_image, to_csv, RealImage};
use csuq_core::metrics::{bias_decay_study, empirical_coverage, oracle_error_check, rip_bruteforce};
use csuq_core::uq::ConfidenceRegions;

use crate::emit;
use crate::plot;
use crate::settings::Settings;

/// Magnitude range of synthesized ground-truth coefficients.
const PHANTOM_MAG_LOW: f64 = 300.0;
const PHANTOM_MAG_HIGH: f64 = 900.0;

/// How many coordinates the interval plot shows at most.
const INTERVAL_COORDS: usize = 64;

/// Largest dimension the diagnostics command brute-forces isometry for.
const ISOMETRY_MAX_P: usize = 16;

struct Truth {
    beta0: Vec<Complex64>,
    support: Vec<usize>,
}

fn load_image(path: &Path) -> Result<RealImage> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("pgm") => load_pgm(path),
        Some("csv") => load_csv(path),
        _ => {
            return Err(anyhow!(
                "unsupported input format for {} (expected .pgm or .csv)",
                path.display()
            ))
        }
    }
    .with_context(|| format!("failed to read input image {}", path.display()))
}

/// Materialize the ground truth and finalize the dimension fields of the
/// config to match it.
fn resolve_truth(settings: &mut Settings) -> Result<Truth> {
    if let Some(path) = settings.input.clone() {
        let img = load_image(&path)?;
        settings.config.p = img.len();
        settings.config.image_dims = Some((img.rows, img.cols));
        settings.config.phantom_s0 = None;
        settings
            .config
            .validate()
            .with_context(|| format!("{} is not usable as a ground truth", path.display()))?;
        let (beta0, support, s0) = sparsify_threshold(&img, settings.config.threshold)?;
        if s0 == 0 {
            bail!(
                "threshold {} removed every coefficient of {}",
                settings.config.threshold,
                path.display()
            );
        }
        Ok(Truth { beta0, support })
    } else if let Some(s0) = settings.config.phantom_s0 {
        let seed = derive_seed(settings.config.master_seed, STREAM_PHANTOM, 0);
        let (beta0, support) = sample_phantom(
            settings.config.p,
            s0,
            PHANTOM_MAG_LOW,
            PHANTOM_MAG_HIGH,
            seed,
        )?;
        Ok(Truth { beta0, support })
    } else {
        bail!(
            "{} needs a ground truth: pass --input <image> or --phantom s0=<int>",
            settings.command
        )
    }
}

fn dims_of(settings: &Settings) -> (usize, usize) {
    settings
        .config
        .image_dims
        .unwrap_or_else(|| image_dims(settings.config.p))
}

/// Single-pass reconstruction: solve, debias, and write out the estimates,
/// the disks, the metrics, and (optionally) the plots.
pub fn reconstruct(mut settings: Settings) -> Result<()> {
    let truth = resolve_truth(&mut settings)?;
    let cfg = settings.config.clone();
    let outcome = run_trial(&cfg, &truth.beta0, &truth.support, 0)?;

    let out = settings.out.clone();
    emit::write_json(&out.join("manifest.json"), &settings.manifest())?;
    emit::write_atomic(
        &out.join("beta_hat.csv"),
        emit::vector_csv(&outcome.solution.beta_hat).as_bytes(),
    )?;
    emit::write_atomic(
        &out.join("beta_u.csv"),
        emit::vector_csv(&outcome.estimate.beta_u).as_bytes(),
    )?;
    emit::write_atomic(
        &out.join("regions.csv"),
        emit::regions_csv(&outcome.regions).as_bytes(),
    )?;
    emit::write_atomic(
        &out.join("trace.csv"),
        emit::trace_csv(&outcome.solution.trace).as_bytes(),
    )?;
    emit::write_json(
        &out.join("metrics.json"),
        &json!({
            "config": cfg,
            "metrics": outcome.metrics,
            "cv": outcome.cv,
        }),
    )?;
    if settings.plots {
        let (rows, cols) = dims_of(&settings);
        let img = magnitude_image(&outcome.solution.beta_hat, rows, cols)?;
        emit::write_atomic(
            &out.join("reconstruction.svg"),
            plot::magnitude_svg(&img).as_bytes(),
        )?;
        let svg = plot::intervals_svg(
            &outcome.regions,
            Some(&truth.beta0),
            cfg.p.min(INTERVAL_COORDS),
        )?;
        emit::write_atomic(&out.join("intervals.svg"), svg.as_bytes())?;
    }
    println!("wrote {}", out.display());
    Ok(())
}

/// Repeated randomized trials with aggregate scores.
pub fn trials(mut settings: Settings) -> Result<()> {
    let truth = resolve_truth(&mut settings)?;
    let cfg = settings.config.clone();
    let result = run_experiment(&cfg, &truth.beta0, &truth.support)?;

    let out = settings.out.clone();
    emit::write_json(&out.join("manifest.json"), &settings.manifest())?;
    emit::write_json(&out.join("experiment.json"), &result)?;
    emit::write_atomic(
        &out.join("trials.csv"),
        emit::trials_csv(&result.per_trial).as_bytes(),
    )?;
    emit::write_atomic(
        &out.join("reconstruction.csv"),
        emit::vector_csv(&result.reconstruction).as_bytes(),
    )?;
    // The radius belongs to the same trial the reconstruction came from:
    // the last successful one.
    let sigma_hat = result
        .per_trial
        .iter()
        .rev()
        .find_map(|r| r.metrics.as_ref())
        .map_or(cfg.sigma, |m| m.sigma_hat);
    let regions = ConfidenceRegions {
        center: result.reconstruction.clone(),
        radius: result.radius,
        alpha: cfg.alpha,
        sigma_hat,
        n: cfg.n(),
    };
    emit::write_atomic(&out.join("regions.csv"), emit::regions_csv(&regions).as_bytes())?;
    if settings.plots {
        let (rows, cols) = dims_of(&settings);
        let img = magnitude_image(&result.reconstruction_lasso, rows, cols)?;
        emit::write_atomic(
            &out.join("reconstruction.svg"),
            plot::magnitude_svg(&img).as_bytes(),
        )?;
        let svg =
            plot::intervals_svg(&regions, Some(&truth.beta0), cfg.p.min(INTERVAL_COORDS))?;
        emit::write_atomic(&out.join("intervals.svg"), svg.as_bytes())?;
    }
    println!(
        "wrote {} ({} of {} trials succeeded)",
        out.display(),
        result.per_trial.iter().filter(|r| r.metrics.is_some()).count(),
        cfg.trials
    );
    Ok(())
}

/// Threshold sweep emitting the fixed-layout summary table.
pub fn table(mut settings: Settings) -> Result<()> {
    let source = if let Some(path) = settings.input.clone() {
        let img = load_image(&path)?;
        settings.config.p = img.len();
        settings.config.image_dims = Some((img.rows, img.cols));
        settings.config.phantom_s0 = None;
        GroundTruthSource::Image(img)
    } else if settings.config.phantom_s0.is_some() {
        GroundTruthSource::Phantom {
            mag_low: PHANTOM_MAG_LOW,
            mag_high: PHANTOM_MAG_HIGH,
        }
    } else {
        bail!("table needs a ground truth: pass --input <image> or --phantom s0=<int>");
    };
    let configs: Vec<_> = settings
        .thresholds
        .iter()
        .map(|&t| {
            let mut c = settings.config.clone();
            c.threshold = t;
            c
        })
        .collect();
    let rows = run_table(&configs, &source)?;

    let out = settings.out.clone();
    emit::write_json(&out.join("manifest.json"), &settings.manifest())?;
    emit::write_atomic(&out.join("table.csv"), emit::table_csv(&rows).as_bytes())?;
    println!("wrote {}", out.display());
    Ok(())
}

/// Calibration and error-structure diagnostics, gathered into one JSON
/// report: a single decomposed trial, empirical coverage, measured error
/// constants, an exact isometry check at tiny dimensions, and a
/// remainder-decay sweep over the measurement count.
pub fn diagnostics(mut settings: Settings) -> Result<()> {
    let truth = resolve_truth(&mut settings)?;
    if truth.support.is_empty() {
        bail!("diagnostics needs a ground truth with a nonempty support");
    }
    let cfg = settings.config.clone();
    let outcome = run_trial(&cfg, &truth.beta0, &truth.support, 0)?;
    let coverage = empirical_coverage(&cfg, &truth.beta0, &truth.support, cfg.trials, cfg.alpha)?;
    let (c2, c1) = oracle_error_check(
        &outcome.solution.beta_hat,
        &truth.beta0,
        truth.support.len(),
        cfg.n(),
        cfg.p,
    )?;

    let isometry = if cfg.p <= ISOMETRY_MAX_P {
        let scale = 1.0 / (outcome.pattern.n() as f64).sqrt();
        let dense: Vec<Vec<Complex64>> = dense_matrix(&outcome.pattern)?
            .into_iter()
            .map(|row| row.into_iter().map(|z| z * scale).collect())
            .collect();
        let s = 2.min(cfg.p);
        Some(json!({ "s": s, "delta": rip_bruteforce(&dense, s)? }))
    } else {
        None
    };

    let mut n_values: Vec<usize> = [0.2, 0.4, 0.8]
        .iter()
        .map(|f| ((f * cfg.p as f64).round() as usize).clamp(1, cfg.p))
        .collect();
    n_values.dedup();
    let mut sweep_cfg = cfg.clone();
    if sweep_cfg.lambda_multiple.is_none() {
        // The sweep needs a fixed penalty; reuse what cross-validation
        // picked for the diagnostic trial.
        sweep_cfg.lambda_multiple = Some(outcome.cv.as_ref().map_or(0.25, |c| c.multiple));
    }
    let decay = bias_decay_study(&sweep_cfg, &truth.beta0, &n_values, cfg.trials)?;

    let out = settings.out.clone();
    emit::write_json(&out.join("manifest.json"), &settings.manifest())?;
    emit::write_json(
        &out.join("diagnostics.json"),
        &json!({
            "config": cfg,
            "trial": {
                "metrics": outcome.metrics,
                "r_linf": outcome.decomposition.r_linf,
                "residual_linf": outcome.decomposition.residual_linf,
            },
            "coverage": coverage,
            "error_constants": { "l2": c2, "l1": c1 },
            "isometry": isometry,
            "remainder_decay": decay,
        }),
    )?;
    println!("wrote {}", out.display());
    Ok(())
}

/// Synthesize a sparse ground truth and save it in reloadable form.
pub fn phantom(settings: Settings) -> Result<()> {
    if settings.input.is_some() {
        bail!("the phantom command takes --phantom s0=<int>, not --input");
    }
    let Some(s0) = settings.config.phantom_s0 else {
        bail!("the phantom command needs --phantom s0=<int>");
    };
    let cfg = &settings.config;
    let seed = derive_seed(cfg.master_seed, STREAM_PHANTOM, 0);
    let (beta0, support) = sample_phantom(cfg.p, s0, PHANTOM_MAG_LOW, PHANTOM_MAG_HIGH, seed)?;
    let (rows, cols) = dims_of(&settings);
    let img = magnitude_image(&beta0, rows, cols)?;

    let out = settings.out.clone();
    emit::write_json(&out.join("manifest.json"), &settings.manifest())?;
    emit::write_atomic(
        &out.join("ground_truth.csv"),
        emit::vector_csv(&beta0).as_bytes(),
    )?;
    emit::write_atomic(&out.join("image.csv"), to_csv(&img).as_bytes())?;
    let mut support_csv = String::from("coordinate\n");
    for i in &support {
        support_csv.push_str(&format!("{i}\n"));
    }
    emit::write_atomic(&out.join("support.csv"), support_csv.as_bytes())?;
    if settings.plots {
        emit::write_atomic(&out.join("phantom.svg"), plot::magnitude_svg(&img).as_bytes())?;
    }
    println!("wrote {}", out.display());
    Ok(())
}
