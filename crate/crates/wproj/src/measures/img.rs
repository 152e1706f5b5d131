//! Grayscale images as discrete measures: positive pixels become atoms at
//! their (row, col) coordinates with intensity-proportional weights.

use std::path::Path;

use ndarray::Array2;

use super::pgm;
use super::DiscreteMeasure;
use crate::{Error, Result};

/// Converts an intensity grid to a measure. Zero pixels are omitted; the
/// remaining intensities are normalized to total mass one. Atom coordinates
/// are `(row, col)` in pixel units, d = 2.
pub fn image_to_measure(grid: &Array2<f64>) -> Result<DiscreteMeasure> {
    if grid.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::NonFinite("image grid"));
    }
    let total: f64 = grid.iter().sum();
    if total <= 0.0 {
        return Err(Error::AllZeroImage);
    }
    let n_pos = grid.iter().filter(|&&v| v > 0.0).count();
    let mut support = Array2::zeros((n_pos, 2));
    let mut weights = ndarray::Array1::zeros(n_pos);
    let mut at = 0;
    for ((r, c), &v) in grid.indexed_iter() {
        if v > 0.0 {
            support[[at, 0]] = r as f64;
            support[[at, 1]] = c as f64;
            weights[at] = v / total;
            at += 1;
        }
    }
    DiscreteMeasure::new(support, weights)
}

/// Decodes PNG or PGM bytes into an intensity grid in `[0, 1]`.
///
/// PNG images are converted to 16-bit luma first, so 8- and 16-bit inputs
/// both map onto `[0, 1]` without precision loss.
pub fn decode_image_bytes(bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        return pgm::parse_pgm(bytes);
    }
    let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::ImageFormat(format!("png: {e}")))?;
    let luma = img.to_luma16();
    let (w, h) = (luma.width() as usize, luma.height() as usize);
    let pixels = (w as u64) * (h as u64);
    if pixels == 0 {
        return Err(Error::ImageFormat("zero image dimension".into()));
    }
    if pixels > pgm::MAX_PIXELS {
        return Err(Error::ImageTooLarge {
            pixels,
            limit: pgm::MAX_PIXELS,
        });
    }
    let mut grid = Array2::zeros((h, w));
    for (x, y, p) in luma.enumerate_pixels() {
        grid[[y as usize, x as usize]] = f64::from(p.0[0]) / 65535.0;
    }
    Ok(grid)
}

/// Measure plus the source grid dimensions `(height, width)`.
pub fn measure_from_image_bytes(bytes: &[u8]) -> Result<(DiscreteMeasure, (usize, usize))> {
    let grid = decode_image_bytes(bytes)?;
    let dims = grid.dim();
    Ok((image_to_measure(&grid)?, dims))
}

/// Reads a PNG (`.png`) or PGM (anything else) file into a measure.
pub fn measure_from_image_path(path: &Path) -> Result<(DiscreteMeasure, (usize, usize))> {
    let bytes = std::fs::read(path)?;
    measure_from_image_bytes(&bytes)
}

/// Re-bins a 2-d measure onto a pixel grid by nearest-pixel accumulation.
/// Atoms outside the grid are clamped to the border; mass is preserved.
/// Intensities are scaled so the heaviest pixel is 1.
pub fn render_to_grid(m: &DiscreteMeasure, height: usize, width: usize) -> Result<Array2<f64>> {
    if m.dim() != 2 {
        return Err(Error::DimensionMismatch {
            left: m.dim(),
            right: 2,
        });
    }
    if height == 0 || width == 0 {
        return Err(Error::EmptyInput("render grid"));
    }
    let mut grid = Array2::zeros((height, width));
    for (row, &w) in m.support().rows().into_iter().zip(m.weights()) {
        let r = row[0].round().clamp(0.0, (height - 1) as f64) as usize;
        let c = row[1].round().clamp(0.0, (width - 1) as f64) as usize;
        grid[[r, c]] += w;
    }
    let max = grid.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        grid.mapv_inplace(|v| v / max);
    }
    Ok(grid)
}

/// Writes a grid as `.png` (8-bit grayscale) or `.pgm` depending on the
/// path extension. Values are clamped to `[0, 1]`.
pub fn write_grid_image(grid: &Array2<f64>, path: &Path) -> Result<()> {
    let is_png = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("png"))
        .unwrap_or(false);
    if is_png {
        let (h, w) = grid.dim();
        let mut img = image::GrayImage::new(w as u32, h as u32);
        for ((r, c), &v) in grid.indexed_iter() {
            let q = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            img.put_pixel(c as u32, r as u32, image::Luma([q]));
        }
        img.save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::ImageFormat(format!("png encode: {e}")))?;
    } else {
        std::fs::write(path, pgm::encode_pgm(grid))?;
    }
    Ok(())
}
