//! Deterministic SVG rendering: magnitude images and interval plots.
//!
//! No plotting dependency — the files are assembled as text with all
//! coordinates formatted to four decimal places, so identical inputs give
//! identical bytes.

use std::cmp::Ordering;
use std::fmt::Write as _;

use anyhow::{bail, Result};
use num_complex::Complex64;

use csuq_core::image::RealImage;
use csuq_core::uq::ConfidenceRegions;

const CELL: usize = 8;

/// Grayscale tile map of an image, brightest at the largest magnitude.
pub fn magnitude_svg(img: &RealImage) -> String {
    let width = img.cols * CELL;
    let height = img.rows * CELL;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    );
    let _ = writeln!(
        out,
        "  <rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"#000000\"/>"
    );
    let max = img.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for r in 0..img.rows {
        for c in 0..img.cols {
            let v = img.get(r, c).abs();
            let shade = if max > 0.0 {
                (255.0 * v / max).round() as u8
            } else {
                0
            };
            if shade == 0 {
                continue;
            }
            let _ = writeln!(
                out,
                "  <rect x=\"{}\" y=\"{}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"#{shade:02x}{shade:02x}{shade:02x}\"/>",
                c * CELL,
                r * CELL,
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Coordinates ranked by descending magnitude of `key`, ties by index.
fn ranked(key: &[Complex64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..key.len()).collect();
    order.sort_by(|&a, &b| {
        key[b]
            .norm()
            .partial_cmp(&key[a].norm())
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Error-bar plot of the real parts of the `k` largest-magnitude
/// coordinates: a dot at each disk center with a bar spanning ± radius,
/// plus a cross at the ground truth when it is known.
///
/// Ranking uses the truth when given, the centers otherwise.
pub fn intervals_svg(
    regions: &ConfidenceRegions,
    truth: Option<&[Complex64]>,
    k: usize,
) -> Result<String> {
    let p = regions.center.len();
    if k > p {
        bail!("cannot plot {k} coordinates: the signal has only {p}");
    }
    if let Some(t) = truth {
        if t.len() != p {
            bail!("truth has length {}, centers have {}", t.len(), p);
        }
    }

    let width = 900.0;
    let height = 420.0;
    let (left, right, top, bottom) = (70.0, 20.0, 20.0, 45.0);
    let plot_w = width - left - right;
    let plot_h = height - top - bottom;

    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    );
    let _ = writeln!(
        out,
        "  <rect x=\"0\" y=\"0\" width=\"{width}\" height=\"{height}\" fill=\"#ffffff\"/>"
    );
    let _ = writeln!(
        out,
        "  <rect x=\"{left}\" y=\"{top}\" width=\"{plot_w}\" height=\"{plot_h}\" fill=\"none\" stroke=\"#444444\" stroke-width=\"1\"/>"
    );

    let order = {
        let mut order = ranked(truth.unwrap_or(&regions.center));
        order.truncate(k);
        order
    };

    if !order.is_empty() {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in &order {
            lo = lo.min(regions.center[i].re - regions.radius);
            hi = hi.max(regions.center[i].re + regions.radius);
            if let Some(t) = truth {
                lo = lo.min(t[i].re);
                hi = hi.max(t[i].re);
            }
        }
        let pad = if hi > lo { 0.05 * (hi - lo) } else { 1.0 };
        let (lo, hi) = (lo - pad, hi + pad);
        let y = |v: f64| top + (hi - v) / (hi - lo) * plot_h;
        let step = plot_w / order.len() as f64;

        for (tick, label) in [(lo, "min"), (0.5 * (lo + hi), "mid"), (hi, "max")] {
            let _ = label;
            let _ = writeln!(
                out,
                "  <text x=\"{:.4}\" y=\"{:.4}\" font-size=\"11\" font-family=\"monospace\" text-anchor=\"end\" fill=\"#222222\">{:.4}</text>",
                left - 6.0,
                y(tick) + 4.0,
                tick
            );
        }
        if lo < 0.0 && hi > 0.0 {
            let _ = writeln!(
                out,
                "  <line x1=\"{left}\" y1=\"{0:.4}\" x2=\"{1:.4}\" y2=\"{0:.4}\" stroke=\"#bbbbbb\" stroke-width=\"1\" stroke-dasharray=\"4 3\"/>",
                y(0.0),
                left + plot_w
            );
        }

        for (rank, &i) in order.iter().enumerate() {
            let x = left + (rank as f64 + 0.5) * step;
            let _ = writeln!(
                out,
                "  <line x1=\"{x:.4}\" y1=\"{:.4}\" x2=\"{x:.4}\" y2=\"{:.4}\" stroke=\"#1f77b4\" stroke-width=\"1.5\"/>",
                y(regions.center[i].re - regions.radius),
                y(regions.center[i].re + regions.radius),
            );
            let _ = writeln!(
                out,
                "  <circle cx=\"{x:.4}\" cy=\"{:.4}\" r=\"2.5\" fill=\"#1f77b4\"/>",
                y(regions.center[i].re)
            );
            if let Some(t) = truth {
                let cy = y(t[i].re);
                let _ = writeln!(
                    out,
                    "  <path d=\"M {:.4} {:.4} L {:.4} {:.4} M {:.4} {:.4} L {:.4} {:.4}\" stroke=\"#d62728\" stroke-width=\"1.5\" fill=\"none\"/>",
                    x - 3.0, cy - 3.0, x + 3.0, cy + 3.0,
                    x - 3.0, cy + 3.0, x + 3.0, cy - 3.0,
                );
            }
        }
    }

    let _ = writeln!(
        out,
        "  <text x=\"{:.4}\" y=\"{:.4}\" font-size=\"12\" font-family=\"monospace\" text-anchor=\"middle\" fill=\"#222222\">coordinates by descending magnitude</text>",
        left + plot_w / 2.0,
        height - 12.0
    );
    out.push_str("</svg>\n");
    Ok(out)
}
