use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::green::{disc_coupling_weight, green_at_distance};
use super::layout::NodeLayout;
use super::operator::{solver_contrast, GreenKernel, LsOperator};
use super::solver::{bicgstab, SolveStats, SolverConfig};
use super::ForwardError;
use crate::grid::DoiGrid;
use crate::scene::ContrastMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Incident,
    Total,
    Scattered,
}

/// Complex field sampled at the cell centers of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub grid: DoiGrid,
    pub values: Array2<Complex64>,
    pub kind: FieldKind,
}

impl FieldGrid {
    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncidentField {
    pub field: FieldGrid,
    /// Incident field at the other nodes, in increasing node order.
    pub at_receivers: Vec<Complex64>,
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Line-source field of node `tx`, scaled by the layout's source amplitude.
pub fn incident_field(
    tx: usize,
    layout: &NodeLayout,
    grid: &DoiGrid,
) -> Result<IncidentField, ForwardError> {
    let src = *layout
        .positions()
        .get(tx)
        .ok_or_else(|| ForwardError::Input(format!("transmitter {tx} of {}", layout.m())))?;
    let k = layout.wavenumber();
    let amp = layout.source_amplitude();
    let (ny, nx) = grid.shape();
    let mut values = Array2::zeros((ny, nx));
    for iy in 0..ny {
        for ix in 0..nx {
            let rho = distance(src, grid.cell_center(ix, iy));
            if rho == 0.0 {
                return Err(ForwardError::Singularity);
            }
            values[[iy, ix]] = amp * green_at_distance(k, rho);
        }
    }
    let at_receivers = layout
        .receivers(tx)
        .map(|r| amp * green_at_distance(k, distance(src, layout.positions()[r])))
        .collect();
    Ok(IncidentField {
        field: FieldGrid {
            grid: *grid,
            values,
            kind: FieldKind::Incident,
        },
        at_receivers,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerUnit {
    LinearPower,
    Db,
}

/// Phaseless power readings: column `t` holds transmitter `t`, rows are the
/// receivers in increasing node order with node `t` skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix {
    values: Array2<f64>,
    unit: PowerUnit,
}

impl MeasurementMatrix {
    pub fn new(values: Array2<f64>, unit: PowerUnit) -> Result<Self, ForwardError> {
        let (rows, cols) = values.dim();
        if cols < 3 || rows + 1 != cols {
            return Err(ForwardError::Input(format!(
                "measurement matrix must be (M-1) x M with M >= 3, got {rows}x{cols}"
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ForwardError::Input("non-finite measurement".into()));
        }
        if unit == PowerUnit::LinearPower && values.iter().any(|v| *v < 0.0) {
            return Err(ForwardError::Input("negative linear power".into()));
        }
        Ok(Self { values, unit })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn unit(&self) -> PowerUnit {
        self.unit
    }

    /// Node count `M`.
    pub fn m(&self) -> usize {
        self.values.ncols()
    }

    /// Reading of receiver `rx` for transmitter `tx`; `None` on the diagonal.
    pub fn get(&self, tx: usize, rx: usize) -> Option<f64> {
        NodeLayout::receiver_slot(tx, rx).map(|slot| self.values[[slot, tx]])
    }

    pub fn to_unit(&self, unit: PowerUnit) -> Self {
        let values = match (self.unit, unit) {
            (a, b) if a == b => self.values.clone(),
            (PowerUnit::LinearPower, PowerUnit::Db) => self.values.mapv(|p| 10.0 * p.log10()),
            _ => self.values.mapv(|db| 10f64.powf(db / 10.0)),
        };
        Self { values, unit }
    }

    /// Values flattened row by row (19 rows of 20 for the default ring).
    pub fn to_row_major(&self) -> Vec<f64> {
        self.values.iter().copied().collect()
    }
}

/// Additive Gaussian noise in the dB domain.
///
/// Each reading gets `N(0, sigma)` dB with
/// `sigma = 10 log10(1 + 10^(-snr/10))`, the dB spread of a power
/// perturbation whose relative size matches the stated SNR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn sigma_db(&self) -> f64 {
        10.0 * (1.0 + 10f64.powf(-self.snr_db / 10.0)).log10()
    }

    /// Noisy copy of `w`, in the unit of `w`.
    pub fn apply(&self, w: &MeasurementMatrix) -> Result<MeasurementMatrix, ForwardError> {
        if !(self.snr_db >= 0.0 && self.snr_db.is_finite()) {
            return Err(ForwardError::Config(format!(
                "SNR {} dB must be non-negative",
                self.snr_db
            )));
        }
        let normal = Normal::new(0.0, self.sigma_db())
            .map_err(|e| ForwardError::Config(format!("noise: {e}")))?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed);
        let mut db = w.to_unit(PowerUnit::Db);
        db.values
            .iter_mut()
            .for_each(|v| *v += normal.sample(&mut rng));
        Ok(db.to_unit(w.unit))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolvedField {
    pub field: FieldGrid,
    pub stats: SolveStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    /// Linear power.
    pub matrix: MeasurementMatrix,
    /// One entry per transmitter.
    pub stats: Vec<SolveStats>,
}

/// Cells under the bounding box of a contrast map's support, plus the
/// node-to-cell Green's functions on them.
struct Support {
    ix0: usize,
    iy0: usize,
    bx: usize,
    by: usize,
    contrast: Vec<Complex64>,
    /// `couplings[n][c]`: `g(node n, cell c)` without source amplitude.
    couplings: Vec<Vec<Complex64>>,
    op: LsOperator,
}

/// Forward model for one node layout on one grid. The Green's kernel table
/// is built once and reused for every scene.
#[derive(Debug, Clone)]
pub struct ForwardSimulator {
    layout: NodeLayout,
    cfg: SolverConfig,
    kernel: GreenKernel,
}

impl ForwardSimulator {
    pub fn new(layout: NodeLayout, grid: DoiGrid, cfg: SolverConfig) -> Result<Self, ForwardError> {
        cfg.validate()?;
        let [ex, ey] = layout.extent();
        let tol = 1e-9 * ex.max(ey);
        if (ex - grid.extent_x()).abs() > tol || (ey - grid.extent_y()).abs() > tol {
            return Err(ForwardError::Input(format!(
                "layout spans {ex}x{ey} m but grid spans {}x{} m",
                grid.extent_x(),
                grid.extent_y()
            )));
        }
        let kernel = GreenKernel::new(grid, layout.wavenumber());
        Ok(Self {
            layout,
            cfg,
            kernel,
        })
    }

    /// Simulator on the grid implied by `cfg.cells_per_wavelength`.
    pub fn at_config_resolution(
        layout: NodeLayout,
        cfg: SolverConfig,
    ) -> Result<Self, ForwardError> {
        cfg.validate()?;
        let [ex, ey] = layout.extent();
        let grid = DoiGrid::with_resolution(ex, ey, layout.wavelength(), cfg.cells_per_wavelength)?;
        Self::new(layout, grid, cfg)
    }

    pub fn grid(&self) -> &DoiGrid {
        self.kernel.grid()
    }

    pub fn layout(&self) -> &NodeLayout {
        &self.layout
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    fn support(&self, chi: &ContrastMap) -> Result<Option<Support>, ForwardError> {
        self.grid().ensure_same(&chi.grid)?;
        let (ny, nx) = chi.grid.shape();
        let (mut ix0, mut ix1, mut iy0, mut iy1) = (nx, 0, ny, 0);
        for ((iy, ix), c) in chi.chi.indexed_iter() {
            if *c != Complex64::new(0.0, 0.0) {
                ix0 = ix0.min(ix);
                ix1 = ix1.max(ix + 1);
                iy0 = iy0.min(iy);
                iy1 = iy1.max(iy + 1);
            }
        }
        if ix1 == 0 {
            return Ok(None);
        }
        let (bx, by) = (ix1 - ix0, iy1 - iy0);
        let full = solver_contrast(chi);
        let mut contrast = Vec::with_capacity(bx * by);
        let mut centers = Vec::with_capacity(bx * by);
        for iy in iy0..iy1 {
            for ix in ix0..ix1 {
                contrast.push(full[iy * nx + ix]);
                centers.push(chi.grid.cell_center(ix, iy));
            }
        }
        let k = self.layout.wavenumber();
        let couplings = self
            .layout
            .positions()
            .par_iter()
            .map(|&node| {
                centers
                    .iter()
                    .map(|&c| {
                        let rho = distance(node, c);
                        if rho == 0.0 {
                            Err(ForwardError::Singularity)
                        } else {
                            Ok(green_at_distance(k, rho))
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let op = LsOperator::new(&self.kernel, bx, by, self.cfg.pad_factor)?;
        Ok(Some(Support {
            ix0,
            iy0,
            bx,
            by,
            contrast,
            couplings,
            op,
        }))
    }

    fn solve_support(
        &self,
        sup: &Support,
        tx: usize,
    ) -> Result<(Vec<Complex64>, SolveStats), ForwardError> {
        let amp = self.layout.source_amplitude();
        let rhs: Vec<Complex64> = sup.couplings[tx].iter().map(|g| amp * g).collect();
        // Right Jacobi preconditioning: solve (A D^-1) y = b, x = D^-1 y
        // with D the diagonal 1 - K_self c of A.
        let self_term = self.kernel.coupling(0, 0);
        let inv_diag: Vec<Complex64> = sup
            .contrast
            .iter()
            .map(|c| 1.0 / (1.0 - self_term * c))
            .collect();
        let mut scaled = vec![Complex64::new(0.0, 0.0); rhs.len()];
        let (y, stats) = bicgstab(
            |y, out| {
                scaled
                    .iter_mut()
                    .zip(y.iter().zip(&inv_diag))
                    .for_each(|(s, (v, d))| *s = v * d);
                sup.op.apply(&sup.contrast, &scaled, out)
            },
            &rhs,
            Some(&rhs),
            self.cfg.tolerance,
            self.cfg.max_iterations,
        )?;
        Ok((y.iter().zip(&inv_diag).map(|(v, d)| v * d).collect(), stats))
    }

    /// Noiseless linear-power measurement matrix for `chi`.
    pub fn simulate(&self, chi: &ContrastMap) -> Result<Simulation, ForwardError> {
        let m = self.layout.m();
        let k = self.layout.wavenumber();
        let amp = self.layout.source_amplitude();
        let pos = self.layout.positions();
        let sup = self.support(chi)?;
        let weight = k * k * disc_coupling_weight(k, self.grid().equivalent_radius());

        let columns: Vec<(Vec<f64>, SolveStats)> = (0..m)
            .into_par_iter()
            .map(|tx| {
                let scattered: Option<(Vec<Complex64>, SolveStats)> = match &sup {
                    None => None,
                    Some(sup) => {
                        let (u, stats) = self.solve_support(sup, tx)?;
                        let cu: Vec<Complex64> =
                            sup.contrast.iter().zip(&u).map(|(c, v)| c * v).collect();
                        let scat = (0..m)
                            .map(|r| {
                                if r == tx {
                                    Complex64::new(0.0, 0.0)
                                } else {
                                    weight
                                        * sup.couplings[r]
                                            .iter()
                                            .zip(&cu)
                                            .map(|(g, s)| g * s)
                                            .sum::<Complex64>()
                                }
                            })
                            .collect();
                        Some((scat, stats))
                    }
                };
                let column = self
                    .layout
                    .receivers(tx)
                    .map(|r| {
                        let mut total = amp * green_at_distance(k, distance(pos[tx], pos[r]));
                        if let Some((scat, _)) = &scattered {
                            total += scat[r];
                        }
                        total.norm_sqr()
                    })
                    .collect();
                let stats = scattered
                    .map(|(_, s)| s)
                    .unwrap_or_else(|| SolveStats::trivial(0));
                Ok((column, stats))
            })
            .collect::<Result<Vec<_>, ForwardError>>()?;

        let mut values = Array2::zeros((m - 1, m));
        let mut stats = Vec::with_capacity(m);
        for (tx, (column, s)) in columns.into_iter().enumerate() {
            for (slot, p) in column.into_iter().enumerate() {
                values[[slot, tx]] = p;
            }
            stats.push(s);
        }
        Ok(Simulation {
            matrix: MeasurementMatrix::new(values, PowerUnit::LinearPower)?,
            stats,
        })
    }

    /// Total field on the full grid for transmitter `tx`.
    pub fn solve_field(&self, chi: &ContrastMap, tx: usize) -> Result<SolvedField, ForwardError> {
        let inc = incident_field(tx, &self.layout, self.grid())?;
        let Some(sup) = self.support(chi)? else {
            return Ok(SolvedField {
                field: FieldGrid {
                    kind: FieldKind::Total,
                    ..inc.field
                },
                stats: SolveStats::trivial(0),
            });
        };
        let (u, stats) = self.solve_support(&sup, tx)?;
        // Outside the support the field follows from one convolution:
        // u = u_inc + K * (c u).
        let grid = *self.grid();
        let (ny, nx) = grid.shape();
        let mut cu = vec![Complex64::new(0.0, 0.0); nx * ny];
        for by in 0..sup.by {
            for bx in 0..sup.bx {
                let b = by * sup.bx + bx;
                cu[(sup.iy0 + by) * nx + sup.ix0 + bx] = sup.contrast[b] * u[b];
            }
        }
        let full = LsOperator::new(&self.kernel, nx, ny, self.cfg.pad_factor)?;
        let mut scat = vec![Complex64::new(0.0, 0.0); nx * ny];
        full.convolve(&cu, &mut scat);
        let values = Array2::from_shape_fn((ny, nx), |(iy, ix)| {
            inc.field.values[[iy, ix]] + scat[iy * nx + ix]
        });
        Ok(SolvedField {
            field: FieldGrid {
                grid,
                values,
                kind: FieldKind::Total,
            },
            stats,
        })
    }
}

/// Solves for the total field of transmitter `tx` on the grid of `chi`.
pub fn solve_total_field(
    chi: &ContrastMap,
    tx: usize,
    layout: &NodeLayout,
    cfg: &SolverConfig,
) -> Result<SolvedField, ForwardError> {
    if tx >= layout.m() {
        return Err(ForwardError::Input(format!(
            "transmitter {tx} of {}",
            layout.m()
        )));
    }
    ForwardSimulator::new(layout.clone(), chi.grid, cfg.clone())?.solve_field(chi, tx)
}

/// Linear-power measurement matrix for `chi`, optionally with dB-domain
/// Gaussian noise.
pub fn simulate_measurements(
    chi: &ContrastMap,
    layout: &NodeLayout,
    cfg: &SolverConfig,
    noise: Option<&NoiseSpec>,
) -> Result<MeasurementMatrix, ForwardError> {
    let sim = ForwardSimulator::new(layout.clone(), chi.grid, cfg.clone())?.simulate(chi)?;
    match noise {
        Some(n) => n.apply(&sim.matrix),
        None => Ok(sim.matrix),
    }
}

/// Free-space power matrix of a layout.
impl NodeLayout {
    pub fn free_space_powers(&self) -> MeasurementMatrix {
        let m = self.m();
        let k = self.wavenumber();
        let amp = self.source_amplitude();
        let pos = self.positions();
        let mut values = Array2::zeros((m - 1, m));
        for tx in 0..m {
            for (slot, r) in self.receivers(tx).enumerate() {
                values[[slot, tx]] =
                    (amp * green_at_distance(k, distance(pos[tx], pos[r]))).norm_sqr();
            }
        }
        MeasurementMatrix::new(values, PowerUnit::LinearPower)
            .expect("free-space powers are finite")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{rasterize, Geometry, ShapeSpec};

    fn layout() -> NodeLayout {
        NodeLayout::perimeter(3.0, 3.0, 20, 2.4e9).unwrap()
    }

    #[test]
    fn doubling_amplitude_doubles_every_sample() {
        let grid = DoiGrid::square(3.0, 32).unwrap();
        let l = layout();
        let a = incident_field(3, &l, &grid).unwrap();
        let l2 = l.clone().with_amplitude(2.0 * l.source_amplitude());
        let b = incident_field(3, &l2, &grid).unwrap();
        for (x, y) in a.field.values.iter().zip(b.field.values.iter()) {
            assert_eq!(*y, *x * 2.0);
        }
        for (x, y) in a.at_receivers.iter().zip(&b.at_receivers) {
            assert_eq!(*y, *x * 2.0);
        }
    }

    #[test]
    fn far_field_decays_as_inverse_square_root() {
        // Compare |u| at d and 2d; large-argument asymptotics give sqrt(2).
        let l =
            NodeLayout::from_positions(vec![[0.0, 1.5], [3.0, 0.2], [3.0, 2.8]], [3.0, 3.0], 2.4e9)
                .unwrap();
        let k = l.wavenumber();
        let d = 1.2;
        let near = green_at_distance(k, d).norm();
        let far = green_at_distance(k, 2.0 * d).norm();
        assert!((near / far / 2f64.sqrt() - 1.0).abs() < 0.01);
    }

    #[test]
    fn symmetric_receivers_see_equal_magnitude() {
        // Node 2 sits mid-bottom-wall; nodes 0 and 4 are mirror images.
        let l = NodeLayout::perimeter(3.0, 3.0, 20, 2.4e9).unwrap();
        let grid = DoiGrid::square(3.0, 16).unwrap();
        let inc = incident_field(2, &l, &grid).unwrap();
        let a = inc.at_receivers[0].norm();
        let b = inc.at_receivers[3].norm();
        assert!((a - b).abs() <= 1e-15 * a);
    }

    #[test]
    fn empty_scene_reproduces_free_space() {
        let grid = DoiGrid::square(3.0, 64).unwrap();
        let l = layout();
        let w = simulate_measurements(
            &ContrastMap::zeros(grid),
            &l,
            &SolverConfig::default(),
            None,
        )
        .unwrap();
        assert_eq!(w, l.free_space_powers());
        let farthest = w.values().iter().copied().fold(f64::INFINITY, f64::min);
        assert!((farthest - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_scene_total_field_equals_incident() {
        let grid = DoiGrid::square(3.0, 24).unwrap();
        let l = layout();
        let solved =
            solve_total_field(&ContrastMap::zeros(grid), 5, &l, &SolverConfig::default()).unwrap();
        let inc = incident_field(5, &l, &grid).unwrap();
        assert_eq!(solved.field.values, inc.field.values);
        assert_eq!(solved.stats.iterations, 0);
    }

    #[test]
    fn negative_snr_is_rejected() {
        let grid = DoiGrid::square(3.0, 16).unwrap();
        let noise = NoiseSpec {
            snr_db: -3.0,
            seed: 1,
        };
        let err = simulate_measurements(
            &ContrastMap::zeros(grid),
            &layout(),
            &SolverConfig::default(),
            Some(&noise),
        );
        assert!(matches!(err, Err(ForwardError::Config(_))));
    }

    #[test]
    fn noise_is_seeded() {
        let grid = DoiGrid::square(3.0, 16).unwrap();
        let run = |seed| {
            simulate_measurements(
                &ContrastMap::zeros(grid),
                &layout(),
                &SolverConfig::default(),
                Some(&NoiseSpec { snr_db: 20.0, seed }),
            )
            .unwrap()
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4), run(5));
    }

    #[test]
    fn full_grid_field_matches_support_solution_inside_object() {
        let l = layout();
        let grid = DoiGrid::with_resolution(3.0, 3.0, l.wavelength(), 8.0).unwrap();
        let spec = ShapeSpec {
            center: [1.2, 1.7],
            geometry: Geometry::Circle { radius: 0.2 },
            permittivity: Complex64::new(2.0, 0.1),
        };
        let (_, chi) = rasterize(&spec, &grid).unwrap();
        let cfg = SolverConfig {
            tolerance: 1e-10,
            ..SolverConfig::default()
        };
        let solved = solve_total_field(&chi, 7, &l, &cfg).unwrap();
        assert!(solved.field.is_finite());
        // The full-grid field must satisfy the integral equation everywhere.
        let inc = incident_field(7, &l, &grid).unwrap();
        let op =
            super::super::apply_ls_operator(&chi, &solved.field, l.wavenumber(), &cfg).unwrap();
        let num: f64 = op
            .values
            .iter()
            .zip(inc.field.values.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        let den: f64 = inc.field.values.iter().map(|b| b.norm_sqr()).sum();
        assert!((num / den).sqrt() < 1e-9);
    }
}
