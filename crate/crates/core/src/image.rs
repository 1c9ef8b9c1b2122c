//! Real-valued image container plus file ingestion (PGM, CSV) and the
//! flat-vector/image reshaping conventions used everywhere else.

use num_complex::Complex64;
use std::path::Path;

use crate::error::{Error, Result};

/// A rows x cols grayscale image stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RealImage {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl RealImage {
    /// Build from parts, validating the shape and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if data.len() != rows * cols {
            return Err(Error::dims(format!(
                "image data has {} entries, expected {rows} x {cols}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("image contains non-finite values"));
        }
        Ok(RealImage { rows, cols, data })
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    /// True when the image has no pixels (never, by construction).
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Pixel accessor (row-major).
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

/// Canonical image shape for a flat vector of length `p`: the largest
/// divisor of `p` not exceeding sqrt(p) becomes the row count, so the shape
/// is as close to square as `p` allows (rows <= cols).
pub fn image_dims(p: usize) -> (usize, usize) {
    assert!(p >= 1, "p must be >= 1");
    let mut r = (p as f64).sqrt().floor() as usize;
    while r > 1 {
        if p % r == 0 {
            return (r, p / r);
        }
        r -= 1;
    }
    (1, p)
}

/// Reshape the moduli of a complex vector into an image.
pub fn magnitude_image(values: &[Complex64], rows: usize, cols: usize) -> Result<RealImage> {
    if values.len() != rows * cols {
        return Err(Error::dims(format!(
            "vector of length {} cannot be reshaped to {rows} x {cols}",
            values.len()
        )));
    }
    RealImage::new(rows, cols, values.iter().map(|z| z.norm()).collect())
}

/// Parse a PGM image from raw bytes (ASCII `P2` or binary `P5`, 8- or
/// 16-bit; 16-bit samples are big-endian per the format).
pub fn parse_pgm(bytes: &[u8]) -> Result<RealImage> {
    let mut pos = 0usize;

    // Header tokens are whitespace-separated; '#' starts a comment to EOL.
    let next_token = |pos: &mut usize| -> Result<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(Error::Parse("unexpected end of PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };

    let magic = next_token(&mut pos)?;
    if magic != "P2" && magic != "P5" {
        return Err(Error::Parse(format!(
            "unsupported image magic {magic:?} (expected P2 or P5)"
        )));
    }
    let parse_dim = |tok: String, what: &str| -> Result<usize> {
        tok.parse::<usize>()
            .map_err(|_| Error::Parse(format!("invalid PGM {what}: {tok:?}")))
    };
    let cols = parse_dim(next_token(&mut pos)?, "width")?;
    let rows = parse_dim(next_token(&mut pos)?, "height")?;
    let maxval = parse_dim(next_token(&mut pos)?, "maxval")?;
    if !(1..=65535).contains(&maxval) {
        return Err(Error::Parse(format!("PGM maxval {maxval} out of range")));
    }
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Parse("PGM dimensions overflow".into()))?;

    let data: Vec<f64> = if magic == "P2" {
        let mut vals = Vec::with_capacity(count);
        for _ in 0..count {
            let tok = next_token(&mut pos)?;
            let v: u32 = tok
                .parse()
                .map_err(|_| Error::Parse(format!("invalid PGM sample {tok:?}")))?;
            vals.push(v as f64);
        }
        vals
    } else {
        // Exactly one whitespace byte separates maxval from binary samples.
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err(Error::Parse("missing separator before PGM raster".into()));
        }
        pos += 1;
        let wide = maxval > 255;
        let needed = count * if wide { 2 } else { 1 };
        let raster = bytes
            .get(pos..pos + needed)
            .ok_or_else(|| Error::Parse("PGM raster truncated".into()))?;
        if wide {
            raster
                .chunks_exact(2)
                .map(|c| (u16::from_be_bytes([c[0], c[1]])) as f64)
                .collect()
        } else {
            raster.iter().map(|&b| b as f64).collect()
        }
    };

    if data.iter().any(|&v| v > maxval as f64) {
        return Err(Error::Parse("PGM sample exceeds declared maxval".into()));
    }
    RealImage::new(rows, cols, data)
}

/// Load a PGM file.
pub fn load_pgm(path: impl AsRef<Path>) -> Result<RealImage> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| {
        Error::InvalidInput(format!("cannot read image {}: {e}", path.display()))
    })?;
    parse_pgm(&bytes)
}

/// Parse a single-channel CSV (one image row per line).
pub fn parse_csv(text: &str) -> Result<RealImage> {
    let mut rows_data: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let row: Vec<f64> = trimmed
            .split(',')
            .map(|cell| {
                cell.trim().parse::<f64>().map_err(|_| {
                    Error::Parse(format!("line {}: invalid number {cell:?}", lineno + 1))
                })
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows_data.first() {
            if row.len() != first.len() {
                return Err(Error::Parse(format!(
                    "line {}: expected {} columns, found {}",
                    lineno + 1,
                    first.len(),
                    row.len()
                )));
            }
        }
        rows_data.push(row);
    }
    if rows_data.is_empty() {
        return Err(Error::Parse("CSV image has no rows".into()));
    }
    let rows = rows_data.len();
    let cols = rows_data[0].len();
    RealImage::new(rows, cols, rows_data.into_iter().flatten().collect())
}

/// Load a CSV image file.
pub fn load_csv(path: impl AsRef<Path>) -> Result<RealImage> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::InvalidInput(format!("cannot read image {}: {e}", path.display()))
    })?;
    parse_csv(&text)
}

/// Render an image as CSV text (one row per line, shortest-round-trip floats).
pub fn to_csv(image: &RealImage) -> String {
    let mut out = String::new();
    for r in 0..image.rows {
        let row = &image.data[r * image.cols..(r + 1) * image.cols];
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Save an image as CSV.
pub fn save_csv(path: impl AsRef<Path>, image: &RealImage) -> Result<()> {
    std::fs::write(path.as_ref(), to_csv(image))?;
    Ok(())
}
