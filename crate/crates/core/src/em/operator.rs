use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::green::{disc_coupling_weight, green_at_distance, self_cell_coupling};
use super::measure::FieldGrid;
use super::solver::SolverConfig;
use super::ForwardError;
use crate::grid::DoiGrid;
use crate::scene::ContrastMap;

/// Discretized volume coupling `k^2 * int_cell g` between two cells of a
/// grid, tabulated by absolute index offset.
#[derive(Debug, Clone)]
pub struct GreenKernel {
    grid: DoiGrid,
    k: f64,
    /// `[|diy|, |dix|]`; entry `[0, 0]` is the self term.
    table: Array2<Complex64>,
}

impl GreenKernel {
    pub fn new(grid: DoiGrid, k: f64) -> Self {
        let (ny, nx) = grid.shape();
        let a = grid.equivalent_radius();
        let k2w = k * k * disc_coupling_weight(k, a);
        let (dx, dy) = (grid.dx(), grid.dy());
        let rows: Vec<Vec<Complex64>> = (0..ny)
            .into_par_iter()
            .map(|iy| {
                (0..nx)
                    .map(|ix| {
                        if ix == 0 && iy == 0 {
                            self_cell_coupling(k, a)
                        } else {
                            let rho = (ix as f64 * dx).hypot(iy as f64 * dy);
                            k2w * green_at_distance(k, rho)
                        }
                    })
                    .collect()
            })
            .collect();
        let table = Array2::from_shape_vec((ny, nx), rows.into_iter().flatten().collect())
            .expect("row lengths match grid");
        Self { grid, k, table }
    }

    pub fn grid(&self) -> &DoiGrid {
        &self.grid
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// Coupling between two cells `dix` columns and `diy` rows apart.
    pub fn coupling(&self, dix: usize, diy: usize) -> Complex64 {
        self.table[[diy, dix]]
    }
}

/// The Lippmann-Schwinger operator `u -> u - K * (c u)` restricted to an
/// `nx` by `ny` block of cells, with the convolution `K *` done by
/// zero-padded FFT.
pub struct LsOperator {
    nx: usize,
    ny: usize,
    px: usize,
    py: usize,
    /// Kernel spectrum, stored transposed (`[x][y]`).
    kernel_hat: Vec<Complex64>,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for LsOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LsOperator")
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .field("px", &self.px)
            .field("py", &self.py)
            .finish()
    }
}

impl LsOperator {
    /// Operator on an `nx` by `ny` block of the kernel's grid. The FFT size
    /// is `pad_factor` times the block size, at least `2n - 1` for an
    /// alias-free linear convolution.
    pub fn new(
        kernel: &GreenKernel,
        nx: usize,
        ny: usize,
        pad_factor: usize,
    ) -> Result<Self, ForwardError> {
        let (gy, gx) = kernel.grid.shape();
        if nx == 0 || ny == 0 || nx > gx || ny > gy {
            return Err(ForwardError::Input(format!(
                "block {nx}x{ny} does not fit the {gx}x{gy} kernel grid"
            )));
        }
        if pad_factor < 2 {
            return Err(ForwardError::Config(format!(
                "pad factor {pad_factor} aliases the convolution; need >= 2"
            )));
        }
        let px = pad_factor * nx;
        let py = pad_factor * ny;
        let mut planner = FftPlanner::new();
        let mut op = Self {
            nx,
            ny,
            px,
            py,
            kernel_hat: Vec::new(),
            fwd_x: planner.plan_fft_forward(px),
            inv_x: planner.plan_fft_inverse(px),
            fwd_y: planner.plan_fft_forward(py),
            inv_y: planner.plan_fft_inverse(py),
        };

        // Circulant embedding of the kernel: offset d lands at d mod p.
        let mut buf = vec![Complex64::new(0.0, 0.0); px * py];
        for iy in 0..py {
            let dy = if iy < ny {
                Some(iy)
            } else if iy > py - ny {
                Some(py - iy)
            } else {
                None
            };
            let Some(dy) = dy else { continue };
            for ix in 0..px {
                let dx = if ix < nx {
                    Some(ix)
                } else if ix > px - nx {
                    Some(px - ix)
                } else {
                    None
                };
                if let Some(dx) = dx {
                    buf[iy * px + ix] = kernel.coupling(dx, dy);
                }
            }
        }
        op.fwd_x.process(&mut buf);
        let mut t = transpose(&buf, py, px);
        op.fwd_y.process(&mut t);
        let scale = 1.0 / (px * py) as f64;
        t.iter_mut().for_each(|v| *v *= scale);
        op.kernel_hat = t;
        Ok(op)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `out = K * src` (linear convolution), both row-major `[iy][ix]`.
    pub fn convolve(&self, src: &[Complex64], out: &mut [Complex64]) {
        let (nx, ny, px, py) = (self.nx, self.ny, self.px, self.py);
        assert_eq!(src.len(), nx * ny);
        assert_eq!(out.len(), nx * ny);
        let mut a = vec![Complex64::new(0.0, 0.0); ny * px];
        for iy in 0..ny {
            a[iy * px..iy * px + nx].copy_from_slice(&src[iy * nx..(iy + 1) * nx]);
        }
        // Rows at or beyond ny are zero, so only the first ny rows need a
        // forward transform and only they are needed after the inverse.
        self.fwd_x.process(&mut a);
        let mut t = vec![Complex64::new(0.0, 0.0); px * py];
        for iy in 0..ny {
            for ix in 0..px {
                t[ix * py + iy] = a[iy * px + ix];
            }
        }
        self.fwd_y.process(&mut t);
        t.iter_mut()
            .zip(&self.kernel_hat)
            .for_each(|(v, k)| *v *= k);
        self.inv_y.process(&mut t);
        for iy in 0..ny {
            for ix in 0..px {
                a[iy * px + ix] = t[ix * py + iy];
            }
        }
        self.inv_x.process(&mut a);
        for iy in 0..ny {
            out[iy * nx..(iy + 1) * nx].copy_from_slice(&a[iy * px..iy * px + nx]);
        }
    }

    /// `out = u - K * (contrast .* u)`.
    pub fn apply(&self, contrast: &[Complex64], u: &[Complex64], out: &mut [Complex64]) {
        let cu: Vec<Complex64> = contrast.iter().zip(u).map(|(c, v)| c * v).collect();
        self.convolve(&cu, out);
        out.iter_mut().zip(u).for_each(|(o, v)| *o = v - *o);
    }
}

fn transpose(buf: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut t = vec![Complex64::new(0.0, 0.0); buf.len()];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = buf[r * cols + c];
        }
    }
    t
}

/// Solver-side contrast: the conjugate of the scene contrast (see the
/// module docs for the time convention).
pub(crate) fn solver_contrast(chi: &ContrastMap) -> Vec<Complex64> {
    chi.chi.iter().map(|c| c.conj()).collect()
}

/// Applies `(I - k^2 G_D[chi .])` to a field on the full grid of `chi`.
pub fn apply_ls_operator(
    chi: &ContrastMap,
    u: &FieldGrid,
    k: f64,
    cfg: &SolverConfig,
) -> Result<FieldGrid, ForwardError> {
    chi.grid.ensure_same(&u.grid)?;
    cfg.validate()?;
    let grid = chi.grid;
    let kernel = GreenKernel::new(grid, k);
    let op = LsOperator::new(&kernel, grid.nx(), grid.ny(), cfg.pad_factor)?;
    let contrast = solver_contrast(chi);
    let input: Vec<Complex64> = u.values.iter().copied().collect();
    let mut out = vec![Complex64::new(0.0, 0.0); input.len()];
    op.apply(&contrast, &input, &mut out);
    Ok(FieldGrid {
        grid,
        values: Array2::from_shape_vec(grid.shape(), out).expect("grid-shaped output"),
        kind: u.kind,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::FieldKind;

    fn pseudo_random(n: usize, seed: u64) -> Vec<Complex64> {
        // small LCG; the values only need to be irregular
        let mut s = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        let mut next = || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        (0..n).map(|_| Complex64::new(next(), next())).collect()
    }

    #[test]
    fn zero_contrast_is_identity() {
        let grid = DoiGrid::square(0.5, 12).unwrap();
        let u = FieldGrid {
            grid,
            values: Array2::from_shape_vec((12, 12), pseudo_random(144, 1)).unwrap(),
            kind: FieldKind::Total,
        };
        let out = apply_ls_operator(
            &ContrastMap::zeros(grid),
            &u,
            50.0,
            &SolverConfig::default(),
        )
        .unwrap();
        assert_eq!(out.values, u.values);
    }

    #[test]
    fn convolution_matches_direct_sum_on_rectangular_block() {
        let grid = DoiGrid::new(0.4, 0.3, 11, 9).unwrap();
        let kernel = GreenKernel::new(grid, 40.0);
        let op = LsOperator::new(&kernel, 11, 9, 2).unwrap();
        let src = pseudo_random(99, 7);
        let mut fast = vec![Complex64::new(0.0, 0.0); 99];
        op.convolve(&src, &mut fast);
        for iy in 0..9usize {
            for ix in 0..11usize {
                let mut want = Complex64::new(0.0, 0.0);
                for jy in 0..9usize {
                    for jx in 0..11usize {
                        want +=
                            kernel.coupling(ix.abs_diff(jx), iy.abs_diff(jy)) * src[jy * 11 + jx];
                    }
                }
                let got = fast[iy * 11 + ix];
                assert!((got - want).norm() <= 1e-12 * want.norm().max(1.0));
            }
        }
    }

    #[test]
    fn rejects_aliasing_pad_factor() {
        let grid = DoiGrid::square(0.5, 8).unwrap();
        let kernel = GreenKernel::new(grid, 40.0);
        assert!(matches!(
            LsOperator::new(&kernel, 8, 8, 1),
            Err(ForwardError::Config(_))
        ));
    }
}
