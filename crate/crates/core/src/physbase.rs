//! Model-based comparison arm: Rytov-linearized phaseless ridge inversion
//! on a coarse grid, threshold segmentation, and nearest-neighbor mask
//! resampling.
//!
//! The reciprocal pairs `(t, r)` and `(r, t)` give identical rows, so a
//! ring of `M` nodes yields only `M (M - 1) / 2` independent equations for
//! the 3600 coarse cells. The minimum-norm ridge estimate is therefore
//! speckled; [`Segmentation`] smooths it and clamps it to non-negative
//! contrast before thresholding.
//!
//! This is a plain first-order Rytov inversion. Its scores are qualitative
//! anchors for the learned model and do not reproduce any published
//! extended-Rytov method.
//!
//! # Data model
//!
//! For transmitter `t` and receiver `r` the log-amplitude ratio
//! `d = 0.5 ln(w / w_free)` is linear in a real contrast `x` to first order:
//! `d ~ sum_c Re{ k^2 s_c g(c, r) u_inc(c; t) / u_inc(r; t) } x_c`, where
//! `s_c` is the same equal-area-disc cell weight used by the forward solver.
//! Row `t * (M - 1) + slot` of the operator holds pair `(t, r)`, `slot`
//! being the position of `r` among the receivers of `t`; column
//! `iy * nx + ix` holds cell `(ix, iy)`.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::em::{
    disc_coupling_weight, green_at_distance, MeasurementMatrix, NodeLayout, PowerUnit,
};
use crate::grid::{DoiGrid, GridError};
use crate::metrics::{iou, MetricsError};
use crate::scene::GroundTruthMask;

/// Side of the coarse inversion grid.
pub const COARSE_CELLS: usize = 60;
/// Side of the target masks.
pub const TARGET_CELLS: usize = 256;
/// Ridge weights, as multiples of `||A^T A||`, tried by [`select_lambda`].
pub const LAMBDA_FACTORS: [f64; 6] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1];
/// Histogram bins used by Otsu's method.
pub const OTSU_BINS: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysbaseError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("node {node} at ({x}, {y}) coincides with a cell center")]
    Coincident { node: usize, x: f64, y: f64 },
    #[error("invalid data: {0}")]
    Data(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("constant image: Otsu histogram is degenerate; use a fixed threshold")]
    DegenerateHistogram,
    #[error("linear algebra failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Rytov sensitivity matrix of one layout on one grid, with the Gram
/// matrix `A A^T` and `||A^T A||` cached for repeated ridge solves.
#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    grid: DoiGrid,
    m: usize,
    matrix: DMatrix<f64>,
    gram: DMatrix<f64>,
    spectral_norm: f64,
}

/// Coarse inversion grid of a layout's domain.
pub fn coarse_grid(layout: &NodeLayout) -> Result<DoiGrid, GridError> {
    let [ex, ey] = layout.extent();
    DoiGrid::new(ex, ey, COARSE_CELLS, COARSE_CELLS)
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Builds the Rytov sensitivity matrix for `layout` on `grid`.
pub fn build_phaseless_operator(
    layout: &NodeLayout,
    grid: &DoiGrid,
) -> Result<LinearizedOperator, PhysbaseError> {
    let [ex, ey] = layout.extent();
    let tol = 1e-9 * ex.max(ey);
    if (ex - grid.extent_x()).abs() > tol || (ey - grid.extent_y()).abs() > tol {
        return Err(GridError::Mismatch(format!(
            "layout spans {ex}x{ey} m but grid spans {}x{} m",
            grid.extent_x(),
            grid.extent_y()
        ))
        .into());
    }
    let k = layout.wavenumber();
    let m = layout.m();
    let pos = layout.positions();
    let (ny, nx) = grid.shape();
    let n = nx * ny;
    let centers: Vec<[f64; 2]> = (0..n).map(|c| grid.cell_center(c % nx, c / nx)).collect();

    // g(node, cell) for every node; amplitudes cancel in the ratio.
    let g: Vec<Vec<Complex64>> = pos
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            centers
                .iter()
                .map(|&c| {
                    let rho = distance(p, c);
                    if rho == 0.0 {
                        Err(PhysbaseError::Coincident {
                            node: i,
                            x: p[0],
                            y: p[1],
                        })
                    } else {
                        Ok(green_at_distance(k, rho))
                    }
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;

    let weight = k * k * disc_coupling_weight(k, grid.equivalent_radius());
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .flat_map_iter(|t| {
            let g = &g;
            layout.receivers(t).map(move |r| {
                let inc_r = green_at_distance(k, distance(pos[t], pos[r]));
                let scale = weight / inc_r;
                (0..n).map(|c| (scale * g[r][c] * g[t][c]).re).collect()
            })
        })
        .collect();
    let matrix = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(PhysbaseError::Numerical("non-finite operator entry".into()));
    }
    let gram = &matrix * matrix.transpose();
    let spectral_norm = gram
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(0.0, f64::max);
    Ok(LinearizedOperator {
        grid: *grid,
        m,
        matrix,
        gram,
        spectral_norm,
    })
}

impl LinearizedOperator {
    pub fn grid(&self) -> &DoiGrid {
        &self.grid
    }

    /// `(rows, cols)` = `(M (M - 1), cells)`.
    pub fn shape(&self) -> (usize, usize) {
        self.matrix.shape()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// `||A^T A||_2`, the scale for ridge weights.
    pub fn normal_norm(&self) -> f64 {
        self.spectral_norm
    }

    /// Predicted log-amplitude data for a real contrast image.
    pub fn apply(&self, contrast: &Array2<f64>) -> Result<Vec<f64>, PhysbaseError> {
        if contrast.dim() != self.grid.shape() {
            return Err(PhysbaseError::Data(format!(
                "contrast is {:?}, operator grid is {:?}",
                contrast.dim(),
                self.grid.shape()
            )));
        }
        let x = DVector::from_iterator(contrast.len(), contrast.iter().copied());
        Ok((&self.matrix * x).iter().copied().collect())
    }

    /// Minimizer of `||A x - d||^2 + lambda ||x||^2`, computed in the data
    /// space as `x = A^T (A A^T + lambda I)^-1 d`.
    pub fn ridge(&self, d: &[f64], lambda: f64) -> Result<Vec<f64>, PhysbaseError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(PhysbaseError::Config(format!(
                "lambda {lambda} must be positive"
            )));
        }
        if d.len() != self.matrix.nrows() {
            return Err(PhysbaseError::Data(format!(
                "data has {} entries, operator has {} rows",
                d.len(),
                self.matrix.nrows()
            )));
        }
        let mut system = self.gram.clone();
        for i in 0..system.nrows() {
            system[(i, i)] += lambda;
        }
        let chol = system
            .cholesky()
            .ok_or_else(|| PhysbaseError::Numerical("ridge system not positive definite".into()))?;
        let y = chol.solve(&DVector::from_column_slice(d));
        Ok(self.matrix.tr_mul(&y).iter().copied().collect())
    }
}

/// Ridge estimate of the real contrast on the operator grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RytovEstimate {
    pub contrast: Array2<f64>,
    pub lambda: f64,
    /// `||A x - d|| / ||d||`, zero when `d = 0`.
    pub residual: f64,
}

/// Log-amplitude data `0.5 ln(w / w_free)` in operator row order.
pub fn log_amplitude_data(
    w: &MeasurementMatrix,
    w_free: &MeasurementMatrix,
) -> Result<Vec<f64>, PhysbaseError> {
    if w.m() != w_free.m() {
        return Err(PhysbaseError::Data(format!(
            "measurement has {} nodes, free-space reference {}",
            w.m(),
            w_free.m()
        )));
    }
    let w = w.to_unit(PowerUnit::LinearPower);
    let f = w_free.to_unit(PowerUnit::LinearPower);
    let m = w.m();
    let mut d = Vec::with_capacity(m * (m - 1));
    for t in 0..m {
        for slot in 0..m - 1 {
            let (p, q) = (w.values()[[slot, t]], f.values()[[slot, t]]);
            if !(p > 0.0) || !(q > 0.0) {
                return Err(PhysbaseError::Data(format!(
                    "non-positive power at transmitter {t}, receiver slot {slot}"
                )));
            }
            d.push(0.5 * (p / q).ln());
        }
    }
    Ok(d)
}

/// Rytov ridge inversion of one measurement.
pub fn invert_rytov(
    w: &MeasurementMatrix,
    w_free: &MeasurementMatrix,
    op: &LinearizedOperator,
    lambda: f64,
) -> Result<RytovEstimate, PhysbaseError> {
    if w.m() != op.m {
        return Err(PhysbaseError::Data(format!(
            "measurement has {} nodes, operator {}",
            w.m(),
            op.m
        )));
    }
    let d = log_amplitude_data(w, w_free)?;
    let x = op.ridge(&d, lambda)?;
    let contrast = Array2::from_shape_vec(op.grid.shape(), x).expect("one unknown per cell");
    let predicted = op.apply(&contrast)?;
    let d_norm = d.iter().map(|v| v * v).sum::<f64>().sqrt();
    let r_norm = predicted
        .iter()
        .zip(&d)
        .map(|(p, v)| (p - v).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(RytovEstimate {
        contrast,
        lambda,
        residual: if d_norm > 0.0 { r_norm / d_norm } else { 0.0 },
    })
}

/// Segmentation threshold rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase", deny_unknown_fields)]
pub enum Threshold {
    /// `mask = image >= tau`.
    Fixed { tau: f64 },
    /// Otsu's method on a 256-bin histogram spanning `min..=max`.
    #[default]
    Otsu,
}

/// Histogram bin of `v` for `OTSU_BINS` equal bins over `[lo, hi]`; the
/// maximum falls in the last bin.
fn otsu_bin(v: f64, lo: f64, hi: f64) -> usize {
    let b = ((v - lo) / (hi - lo) * OTSU_BINS as f64).floor();
    (b.max(0.0) as usize).min(OTSU_BINS - 1)
}

/// Otsu split of an image: pixels whose bin index is at least `bin` are
/// foreground. `value` is the lower edge of that bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtsuThreshold {
    pub bin: usize,
    pub value: f64,
}

/// Otsu threshold maximizing the between-class variance over bin indices.
/// Ties resolve to the smallest bin.
pub fn otsu_threshold(image: &Array2<f64>) -> Result<OtsuThreshold, PhysbaseError> {
    let (lo, hi) = finite_range(image)?;
    if !(hi > lo) {
        return Err(PhysbaseError::DegenerateHistogram);
    }
    let mut hist = [0usize; OTSU_BINS];
    for &v in image {
        hist[otsu_bin(v, lo, hi)] += 1;
    }
    let total = image.len() as f64;
    let sum_all: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, &h)| i as f64 * h as f64)
        .sum();
    let (mut w0, mut sum0) = (0.0, 0.0);
    let (mut best, mut best_var) = (1, f64::NEG_INFINITY);
    for t in 1..OTSU_BINS {
        w0 += hist[t - 1] as f64;
        sum0 += (t - 1) as f64 * hist[t - 1] as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = sum0 / w0;
        let mu1 = (sum_all - sum0) / w1;
        let var = w0 * w1 * (mu0 - mu1).powi(2);
        if var > best_var {
            best_var = var;
            best = t;
        }
    }
    Ok(OtsuThreshold {
        bin: best,
        value: lo + (hi - lo) * best as f64 / OTSU_BINS as f64,
    })
}

fn finite_range(image: &Array2<f64>) -> Result<(f64, f64), PhysbaseError> {
    if image.is_empty() {
        return Err(PhysbaseError::Data("empty image".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in image {
        if !v.is_finite() {
            return Err(PhysbaseError::Data("non-finite pixel".into()));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    Ok((lo, hi))
}

/// Binary mask of the salient region of `image`.
pub fn threshold_segment(
    image: &Array2<f64>,
    method: Threshold,
) -> Result<Array2<u8>, PhysbaseError> {
    match method {
        Threshold::Fixed { tau } => {
            finite_range(image)?;
            if !tau.is_finite() {
                return Err(PhysbaseError::Config(format!(
                    "threshold {tau} is not finite"
                )));
            }
            Ok(image.mapv(|v| (v >= tau) as u8))
        }
        Threshold::Otsu => {
            let (lo, hi) = finite_range(image)?;
            let t = otsu_threshold(image)?;
            Ok(image.mapv(|v| (otsu_bin(v, lo, hi) >= t.bin) as u8))
        }
    }
}

/// Separable Gaussian smoothing with a kernel truncated at three standard
/// deviations and renormalized at the image border. `sigma` is in cells;
/// zero returns the input unchanged.
pub fn gaussian_smooth(image: &Array2<f64>, sigma: f64) -> Array2<f64> {
    if sigma <= 0.0 {
        return image.clone();
    }
    let r = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let (ny, nx) = image.dim();
    let pass = |src: &Array2<f64>, along_x: bool| {
        Array2::from_shape_fn((ny, nx), |(y, x)| {
            let (mut acc, mut norm) = (0.0, 0.0);
            for (k, w) in taps.iter().enumerate() {
                let o = k as isize - r;
                let (yy, xx) = if along_x {
                    (y as isize, x as isize + o)
                } else {
                    (y as isize + o, x as isize)
                };
                if (0..ny as isize).contains(&yy) && (0..nx as isize).contains(&xx) {
                    acc += w * src[[yy as usize, xx as usize]];
                    norm += w;
                }
            }
            acc / norm
        })
    };
    pass(&pass(image, true), false)
}

/// How a raw contrast estimate becomes a Physical-60 mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Segmentation {
    /// Gaussian smoothing width in coarse cells applied before
    /// thresholding; suppresses the speckle of the minimum-norm estimate.
    pub smoothing_sigma: f64,
    /// Clamp negative contrast to zero before thresholding (objects never
    /// have `eps_r < 1`).
    pub clamp_negative: bool,
    pub threshold: Threshold,
}

impl Default for Segmentation {
    fn default() -> Self {
        Self {
            smoothing_sigma: 3.0,
            clamp_negative: true,
            threshold: Threshold::Otsu,
        }
    }
}

impl Segmentation {
    pub fn validate(&self) -> Result<(), PhysbaseError> {
        if !(self.smoothing_sigma >= 0.0 && self.smoothing_sigma.is_finite()) {
            return Err(PhysbaseError::Config(format!(
                "smoothing sigma {} must be non-negative",
                self.smoothing_sigma
            )));
        }
        if let Threshold::Fixed { tau } = self.threshold {
            if !tau.is_finite() {
                return Err(PhysbaseError::Config(format!(
                    "threshold {tau} is not finite"
                )));
            }
        }
        Ok(())
    }

    /// Image the threshold is applied to.
    pub fn saliency(&self, estimate: &Array2<f64>) -> Array2<f64> {
        let smooth = gaussian_smooth(estimate, self.smoothing_sigma);
        if self.clamp_negative {
            smooth.mapv(|v| v.max(0.0))
        } else {
            smooth
        }
    }

    /// Mask of the salient region. A flat saliency map under Otsu yields an
    /// empty mask: there is no region to extract.
    pub fn segment(&self, estimate: &Array2<f64>) -> Result<Array2<u8>, PhysbaseError> {
        self.validate()?;
        match threshold_segment(&self.saliency(estimate), self.threshold) {
            Err(PhysbaseError::DegenerateHistogram) => Ok(Array2::zeros(estimate.dim())),
            other => other,
        }
    }
}

/// Nearest-neighbor resampling of a square mask to `out` pixels a side.
///
/// Output pixel `i` reads input pixel `floor((i + 0.5) * n / out)`, the
/// input pixel under its center. Upsampling 60 to 256 thus maps input
/// pixel `j` to a run of 4 or 5 output pixels per axis, so one set pixel
/// becomes a 16, 20 or 25 pixel block.
pub fn resample_nearest(mask: &Array2<u8>, out: usize) -> Array2<u8> {
    let (ny, nx) = mask.dim();
    let map = |i: usize, n: usize| ((2 * i + 1) * n / (2 * out)).min(n - 1);
    Array2::from_shape_fn((out, out), |(y, x)| mask[[map(y, ny), map(x, nx)]])
}

/// Physical-256 from Physical-60.
pub fn resample_mask(mask60: &Array2<u8>) -> Array2<u8> {
    resample_nearest(mask60, TARGET_CELLS)
}

/// Ground-truth mask brought to the coarse grid for Physical-60 scoring.
pub fn downsample_mask(mask: &Array2<u8>, out: usize) -> Array2<u8> {
    resample_nearest(mask, out)
}

/// Raw estimate plus its Physical-60 and Physical-256 masks.
#[derive(Debug, Clone, PartialEq)]
pub struct InversionResult {
    pub estimate: RytovEstimate,
    pub mask60: Array2<u8>,
    pub mask256: Array2<u8>,
}

impl InversionResult {
    pub fn from_estimate(
        estimate: RytovEstimate,
        segmentation: &Segmentation,
    ) -> Result<Self, PhysbaseError> {
        let mask60 = segmentation.segment(&estimate.contrast)?;
        let mask256 = resample_mask(&mask60);
        Ok(Self {
            estimate,
            mask60,
            mask256,
        })
    }
}

/// Full baseline arm: inversion, segmentation, resampling.
pub fn run_baseline(
    w: &MeasurementMatrix,
    w_free: &MeasurementMatrix,
    op: &LinearizedOperator,
    lambda: f64,
    segmentation: &Segmentation,
) -> Result<InversionResult, PhysbaseError> {
    InversionResult::from_estimate(invert_rytov(w, w_free, op, lambda)?, segmentation)
}

/// IoU of a Physical-60 mask against a target mask of any resolution.
pub fn physical60_iou(mask60: &Array2<u8>, truth: &GroundTruthMask) -> Result<f64, PhysbaseError> {
    let gt = downsample_mask(&truth.pixels, mask60.nrows());
    Ok(iou(mask60, &gt)?)
}

/// Outcome of the ridge-weight grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSelection {
    pub lambda: f64,
    /// `(lambda, mean Physical-60 IoU)` for every candidate.
    pub scores: Vec<(f64, f64)>,
}

/// Picks the ridge weight from `factors * ||A^T A||` with the best mean
/// Physical-60 IoU over `samples`; ties go to the smaller weight.
pub fn select_lambda(
    op: &LinearizedOperator,
    w_free: &MeasurementMatrix,
    samples: &[(MeasurementMatrix, GroundTruthMask)],
    factors: &[f64],
    segmentation: &Segmentation,
) -> Result<LambdaSelection, PhysbaseError> {
    if samples.is_empty() || factors.is_empty() {
        return Err(PhysbaseError::Config(
            "lambda search needs samples and candidate factors".into(),
        ));
    }
    let data: Vec<Vec<f64>> = samples
        .iter()
        .map(|(w, _)| log_amplitude_data(w, w_free))
        .collect::<Result<_, _>>()?;
    let mut scores = Vec::with_capacity(factors.len());
    for &f in factors {
        let lambda = f * op.normal_norm();
        let ious: Vec<f64> = data
            .par_iter()
            .zip(samples)
            .map(|(d, (_, gt))| {
                let x = op.ridge(d, lambda)?;
                let img = Array2::from_shape_vec(op.grid.shape(), x).expect("one unknown per cell");
                let mask = segmentation.segment(&img)?;
                physical60_iou(&mask, gt)
            })
            .collect::<Result<_, _>>()?;
        scores.push((lambda, ious.iter().sum::<f64>() / ious.len() as f64));
    }
    let best = scores
        .iter()
        .copied()
        .reduce(|a, b| if b.1 > a.1 { b } else { a })
        .expect("non-empty factors");
    Ok(LambdaSelection {
        lambda: best.0,
        scores,
    })
}
