//! 8-bit grayscale PNG rendering. Spatial images are flipped so that
//! `y` increases upward; masks draw objects black on white.

use std::path::Path;

use ndarray::Array2;

use crate::error::CliError;

/// Grayscale image, row 0 at the top.
#[derive(Debug, Clone, PartialEq)]
pub struct Gray {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Gray {
    pub fn encode_png(&self) -> Result<Vec<u8>, CliError> {
        let mut out = Vec::new();
        let png_error = |e: png::EncodingError| CliError::Failed(format!("png: {e}"));
        let mut enc = png::Encoder::new(&mut out, self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(png_error)?;
        w.write_image_data(&self.pixels).map_err(png_error)?;
        w.finish().map_err(png_error)?;
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|e| CliError::io(path.display().to_string(), e))
    }
}

/// Object pixels 0, background 255, `y` up.
pub fn mask_image(mask: &Array2<u8>) -> Gray {
    let (h, w) = mask.dim();
    let pixels = (0..h)
        .rev()
        .flat_map(|y| (0..w).map(move |x| (y, x)))
        .map(|(y, x)| if mask[[y, x]] != 0 { 0 } else { 255 })
        .collect();
    Gray {
        width: w,
        height: h,
        pixels,
    }
}

/// Source index under the center of output pixel `i`.
fn nearest(i: usize, n_in: usize, n_out: usize) -> usize {
    ((2 * i + 1) * n_in / (2 * n_out)).min(n_in - 1)
}

impl Gray {
    /// Nearest-neighbor rescale.
    pub fn scaled(&self, out_h: usize, out_w: usize) -> Gray {
        let mut pixels = Vec::with_capacity(out_h * out_w);
        for oy in 0..out_h {
            let sy = nearest(oy, self.height, out_h);
            for ox in 0..out_w {
                pixels.push(self.pixels[sy * self.width + nearest(ox, self.width, out_w)]);
            }
        }
        Gray {
            width: out_w,
            height: out_h,
            pixels,
        }
    }
}

/// Linear map of `[min, max]` onto `[0, 255]`; a constant image renders
/// mid-gray. With `flip`, row 0 of `values` ends up at the bottom.
pub fn heatmap_image(values: &Array2<f64>, flip: bool) -> Gray {
    let (h, w) = values.dim();
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let level = |v: f64| {
        if hi > lo {
            ((v - lo) / (hi - lo) * 255.0).round() as u8
        } else {
            128
        }
    };
    let pixels = (0..h)
        .flat_map(|r| {
            let y = if flip { h - 1 - r } else { r };
            values.row(y).iter().map(|&v| level(v)).collect::<Vec<_>>()
        })
        .collect();
    Gray {
        width: w,
        height: h,
        pixels,
    }
}

/// Panels of equal height placed left to right with white gutters.
pub fn side_by_side(panels: &[Gray], gutter: usize) -> Result<Gray, CliError> {
    let height = panels.first().map_or(0, |p| p.height);
    if panels.iter().any(|p| p.height != height) {
        return Err(CliError::Failed("panels must share a height".into()));
    }
    let width =
        panels.iter().map(|p| p.width).sum::<usize>() + gutter * panels.len().saturating_sub(1);
    let mut pixels = vec![255u8; width * height];
    let mut x0 = 0;
    for p in panels {
        for y in 0..height {
            pixels[y * width + x0..y * width + x0 + p.width]
                .copy_from_slice(&p.pixels[y * p.width..(y + 1) * p.width]);
        }
        x0 += p.width + gutter;
    }
    Ok(Gray {
        width,
        height,
        pixels,
    })
}

/// Contrast estimate, Physical-60 mask and full-resolution mask, each
/// shown at `size x size`.
pub fn triptych(
    estimate: &Array2<f64>,
    mask60: &Array2<u8>,
    mask_full: &Array2<u8>,
    size: usize,
) -> Result<Gray, CliError> {
    side_by_side(
        &[
            heatmap_image(estimate, true).scaled(size, size),
            mask_image(mask60).scaled(size, size),
            mask_image(mask_full).scaled(size, size),
        ],
        4,
    )
}
