//! Forward solver against independent references: the cylinder series,
//! a dense matrix assembly, the Born approximation and reciprocity.

use std::time::Instant;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wisp_core::em::{
    green2d, mie_cylinder_reference, recommended_terms, self_cell_coupling, ForwardSimulator,
    MeasurementMatrix, NodeLayout, SolverConfig,
};
use wisp_core::scene::{rasterize, Geometry, ShapeSpec};
use wisp_core::DoiGrid;

fn layout() -> NodeLayout {
    NodeLayout::perimeter(3.0, 3.0, 20, 2.4e9).unwrap()
}

fn circle(center: [f64; 2], radius: f64, eps: Complex64) -> ShapeSpec {
    ShapeSpec {
        center,
        geometry: Geometry::Circle { radius },
        permittivity: eps,
    }
}

fn rel_rms(a: &MeasurementMatrix, b: &MeasurementMatrix) -> f64 {
    let num: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).powi(2))
        .sum();
    let den: f64 = b.values().iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

fn scattered_rel_rms(
    a: &MeasurementMatrix,
    b: &MeasurementMatrix,
    free: &MeasurementMatrix,
) -> f64 {
    let num: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).powi(2))
        .sum();
    let den: f64 = b
        .values()
        .iter()
        .zip(free.values())
        .map(|(y, f)| (y - f).powi(2))
        .sum();
    (num / den).sqrt()
}

fn simulate(cpw: f64, spec: &ShapeSpec, tol: f64) -> (MeasurementMatrix, f64) {
    let l = layout();
    let cfg = SolverConfig {
        cells_per_wavelength: cpw,
        tolerance: tol,
        ..SolverConfig::default()
    };
    let sim = ForwardSimulator::at_config_resolution(l, cfg).unwrap();
    let (_, chi) = rasterize(spec, sim.grid()).unwrap();
    let start = Instant::now();
    let out = sim.simulate(&chi).unwrap();
    (out.matrix, start.elapsed().as_secs_f64())
}

#[test]
fn lossy_cylinder_matches_series_at_fifteen_cells_per_wavelength() {
    let l = layout();
    let eps = Complex64::new(4.0, 0.4);
    let spec = circle([1.5, 1.5], 0.3, eps);
    let (w, secs) = simulate(15.0, &spec, 1e-8);
    let terms = recommended_terms(l.wavenumber(), 0.3);
    let reference = mie_cylinder_reference(0.3, [1.5, 1.5], eps, &l, terms).unwrap();
    let err = rel_rms(&w, &reference);
    let scat = scattered_rel_rms(&w, &reference, &l.free_space_powers());
    println!("15 cpw: relative RMS {err:.4e}, scattered-power RMS {scat:.4e}, {secs:.2} s");
    assert!(err <= 0.02, "relative RMS {err}");
    assert!(secs <= 60.0);
}

#[test]
fn cylinder_error_shrinks_with_resolution() {
    let l = layout();
    let eps = Complex64::new(4.0, 0.4);
    let spec = circle([1.5, 1.5], 0.3, eps);
    let terms = recommended_terms(l.wavenumber(), 0.3);
    let reference = mie_cylinder_reference(0.3, [1.5, 1.5], eps, &l, terms).unwrap();
    let errs: Vec<f64> = [8.0, 15.0, 24.0]
        .iter()
        .map(|&cpw| rel_rms(&simulate(cpw, &spec, 1e-8).0, &reference))
        .collect();
    println!("errors at 8/15/24 cpw: {errs:?}");
    assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
}

#[test]
fn off_center_cylinder_matches_series() {
    let l = layout();
    let eps = Complex64::new(4.0, 0.4);
    let spec = circle([1.1, 1.8], 0.25, eps);
    let (w, _) = simulate(15.0, &spec, 1e-8);
    let terms = recommended_terms(l.wavenumber(), 0.25);
    let reference = mie_cylinder_reference(0.25, [1.1, 1.8], eps, &l, terms).unwrap();
    let err = rel_rms(&w, &reference);
    println!("off-center 4+0.4i: relative RMS {err:.4e}");
    assert!(err <= 0.02, "relative RMS {err}");
}

#[test]
fn water_cylinder_matches_series_when_resolved() {
    // 77 + 7i shortens the interior wavelength almost ninefold, so the
    // tolerance is met only once the interior is resolved.
    let l = layout();
    let eps = Complex64::new(77.0, 7.0);
    let spec = circle([1.6, 1.3], 0.1, eps);
    let terms = recommended_terms(l.wavenumber(), 0.1);
    let reference = mie_cylinder_reference(0.1, [1.6, 1.3], eps, &l, terms).unwrap();
    let errs: Vec<f64> = [15.0, 25.0]
        .iter()
        .map(|&cpw| rel_rms(&simulate(cpw, &spec, 1e-8).0, &reference))
        .collect();
    println!("77+7i r=0.1 at 15/25 cpw: {errs:?}");
    assert!(errs[1] < errs[0] && errs[1] <= 0.02, "{errs:?}");
}

/// First-order Born powers assembled cell by cell from `green2d`.
fn born_powers(l: &NodeLayout, grid: &DoiGrid, chi: &Array2<Complex64>) -> Array2<f64> {
    let k = l.wavenumber();
    let amp = l.source_amplitude();
    let a = grid.equivalent_radius();
    // Equal-area disc integral of g, as in the solver.
    let weight = 2.0 * std::f64::consts::PI * a * puruspe_free_j1(k * a) / k;
    let pos = l.positions();
    let m = l.m();
    let mut out = Array2::zeros((m - 1, m));
    for t in 0..m {
        for (slot, r) in l.receivers(t).enumerate() {
            let mut scat = Complex64::new(0.0, 0.0);
            for ((iy, ix), c) in chi.indexed_iter() {
                if c.norm() == 0.0 {
                    continue;
                }
                let p = grid.cell_center(ix, iy);
                let inc = amp * green2d(k, pos[t], p).unwrap();
                scat += k * k * weight * green2d(k, p, pos[r]).unwrap() * c.conj() * inc;
            }
            let inc = amp * green2d(k, pos[t], pos[r]).unwrap();
            out[[slot, t]] = (inc + scat).norm_sqr();
        }
    }
    out
}

/// J1 from its power series; independent of the library's Bessel code.
fn puruspe_free_j1(x: f64) -> f64 {
    let q = -x * x / 4.0;
    let mut term = x / 2.0;
    let mut sum = term;
    for n in 1..40 {
        term *= q / (n as f64 * (n + 1) as f64);
        sum += term;
    }
    sum
}

#[test]
fn weak_scatterer_converges_to_born_approximation() {
    // The Born error is first order in the contrast, so a tenfold weaker
    // scatterer must agree about ten times better.
    let l = layout();
    let cfg = SolverConfig {
        cells_per_wavelength: 10.0,
        tolerance: 1e-12,
        ..SolverConfig::default()
    };
    let sim = ForwardSimulator::at_config_resolution(l.clone(), cfg).unwrap();
    let free = l.free_space_powers();
    let errs: Vec<f64> = [1.01, 1.001]
        .iter()
        .map(|&eps| {
            let spec = circle([1.3, 1.7], 0.15, Complex64::new(eps, 0.0));
            let (_, chi) = rasterize(&spec, sim.grid()).unwrap();
            let w = sim.simulate(&chi).unwrap().matrix;
            let born = MeasurementMatrix::new(
                born_powers(&l, sim.grid(), &chi.chi),
                wisp_core::em::PowerUnit::LinearPower,
            )
            .unwrap();
            scattered_rel_rms(&w, &born, &free)
        })
        .collect();
    println!("Born scattered-power error at 1.01 / 1.001: {errs:?}");
    assert!(errs[1] < 0.01, "{errs:?}");
    let ratio = errs[0] / errs[1];
    assert!((7.0..14.0).contains(&ratio), "{errs:?}");
}

#[test]
fn power_matrix_is_reciprocal() {
    let l = layout();
    let cfg = SolverConfig {
        cells_per_wavelength: 8.0,
        tolerance: 1e-10,
        ..SolverConfig::default()
    };
    let sim = ForwardSimulator::at_config_resolution(l, cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..3 {
        let r = rng.random_range(0.1..0.35);
        let c = [rng.random_range(0.5..2.5), rng.random_range(0.5..2.5)];
        let eps = Complex64::new(rng.random_range(1.5..6.0), rng.random_range(0.0..0.6));
        let (_, chi) = rasterize(&circle(c, r, eps), sim.grid()).unwrap();
        let w = sim.simulate(&chi).unwrap().matrix;
        for t in 0..20 {
            for r in t + 1..20 {
                let (a, b) = (w.get(t, r).unwrap(), w.get(r, t).unwrap());
                assert!((a - b).abs() <= 1e-6 * a.max(b), "{t}<->{r}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn dense_assembly_matches_fft_operator() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = DoiGrid::new(0.4, 0.3, 9, 8).unwrap();
    let k = 2.0 * std::f64::consts::PI / 0.125;
    let n = grid.len();
    let a = grid.equivalent_radius();
    let weight = 2.0 * std::f64::consts::PI * a * puruspe_free_j1(k * a) / k;
    let centers: Vec<[f64; 2]> = (0..n).map(|c| grid.cell_center(c % 9, c / 9)).collect();
    let kernel = |i: usize, j: usize| {
        if i == j {
            self_cell_coupling(k, a)
        } else {
            k * k * weight * green2d(k, centers[j], centers[i]).unwrap()
        }
    };
    let chi = Array2::from_shape_fn((8, 9), |_| {
        Complex64::new(rng.random_range(0.0..3.0), rng.random_range(0.0..0.5))
    });
    let u = Array2::from_shape_fn((8, 9), |_| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let field = wisp_core::em::FieldGrid {
        grid,
        values: u.clone(),
        kind: wisp_core::em::FieldKind::Total,
    };
    let contrast = wisp_core::scene::ContrastMap {
        grid,
        chi: chi.clone(),
    };
    let fast =
        wisp_core::em::apply_ls_operator(&contrast, &field, k, &SolverConfig::default()).unwrap();
    let chi: Vec<Complex64> = chi.iter().copied().collect();
    let u: Vec<Complex64> = u.iter().copied().collect();
    for i in 0..n {
        let mut want = u[i];
        for j in 0..n {
            want -= kernel(i, j) * chi[j].conj() * u[j];
        }
        let got = fast.values[[i / 9, i % 9]];
        assert!((got - want).norm() <= 1e-12 * want.norm().max(1.0), "{i}");
    }
}
