//! Output encoding: atomic file writes, CSV layouts, JSON.
//!
//! All emitters are pure functions of their inputs with fixed formatting,
//! so a rerun with identical data produces identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use num_complex::Complex64;
use serde::Serialize;

use csuq_core::harness::{TableRow, TrialRecord};
use csuq_core::lasso::TracePoint;
use csuq_core::uq::ConfidenceRegions;

/// Write through a temp file in the same directory, then rename into place,
/// so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("failed to create output directory {}", parent.display()))?;
        }
    }
    let mut tmp_name = path
        .file_name()
        .with_context(|| format!("output path {} has no file name", path.display()))?
        .to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).with_context(|| format!("failed to write {}", tmp.display()))?;
    fs::rename(&tmp, path)
        .with_context(|| format!("failed to move {} into place", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .with_context(|| format!("failed to encode {}", path.display()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

/// Complex vector as `coordinate,re,im` rows.
pub fn vector_csv(values: &[Complex64]) -> String {
    let mut out = String::from("coordinate,re,im\n");
    for (k, z) in values.iter().enumerate() {
        let _ = writeln!(out, "{k},{},{}", z.re, z.im);
    }
    out
}

/// Confidence disks as `coordinate, Re(center), Im(center), radius` rows.
pub fn regions_csv(regions: &ConfidenceRegions) -> String {
    let mut out = String::from("coordinate,re_center,im_center,radius\n");
    for (k, z) in regions.center.iter().enumerate() {
        let _ = writeln!(out, "{k},{},{},{}", z.re, z.im, regions.radius);
    }
    out
}

/// Sweep rows in the fixed column order `threshold,s0,h_S0,h,ssim`.
pub fn table_csv(rows: &[TableRow]) -> String {
    let mut out = String::from("threshold,s0,h_S0,h,ssim\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.threshold, r.s0, r.h_s0, r.h, r.ssim);
    }
    out
}

/// Solver trace as `iteration,objective,kkt_residual` rows.
pub fn trace_csv(trace: &[TracePoint]) -> String {
    let mut out = String::from("iteration,objective,kkt_residual\n");
    for t in trace {
        let _ = writeln!(out, "{},{},{}", t.iteration, t.objective, t.kkt_residual);
    }
    out
}

/// Per-trial metrics, one row per requested trial; failed trials carry the
/// error message and empty metric cells.
pub fn trials_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from(
        "trial,converged,iterations,lambda,sigma_hat,h,h_S0,ssim,r_linf,relative_noise,error\n",
    );
    for rec in records {
        match (&rec.metrics, &rec.error) {
            (Some(m), _) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},",
                    rec.trial,
                    m.converged,
                    m.iterations,
                    m.lambda_used,
                    m.sigma_hat,
                    m.h,
                    opt(m.h_s0),
                    opt(m.ssim),
                    m.r_linf,
                    opt(m.relative_noise),
                );
            }
            (None, err) => {
                let msg = err.as_deref().unwrap_or("unknown failure");
                let _ = writeln!(out, "{},,,,,,,,,,{}", rec.trial, csv_escape(msg));
            }
        }
    }
    out
}

fn opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// Quote a field when it contains CSV-significant characters.
fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}
