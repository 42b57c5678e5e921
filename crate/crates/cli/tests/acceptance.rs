//! Acceptance suite: every headline criterion at its stated tolerance, one
//! PASS/FAIL line each. Exits non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wisp_cli::dataset::{DatasetManifest, MANIFEST_FILE};
use wisp_core::em::{
    apply_ls_operator, green2d, incident_field, mie_cylinder_reference, recommended_terms,
    self_cell_coupling, FieldGrid, FieldKind, ForwardSimulator, MeasurementMatrix, NodeLayout,
    SolverConfig,
};
use wisp_core::metrics::iou;
use wisp_core::physbase::{
    build_phaseless_operator, coarse_grid, physical60_iou, run_baseline, select_lambda,
    Segmentation, LAMBDA_FACTORS,
};
use wisp_core::scene::{
    rasterize, sample_shape, ContrastMap, Geometry, GroundTruthMask, ShapeConfig, ShapeKind,
    ShapeSpec,
};
use wisp_core::DoiGrid;

/// Outcome of one criterion: pass flag and a measured-value summary.
type Verdict = Result<(bool, String), String>;

type Criterion = (&'static str, fn() -> Verdict);

fn layout() -> NodeLayout {
    NodeLayout::perimeter(3.0, 3.0, 20, 2.4e9).unwrap()
}

fn desk_solver() -> SolverConfig {
    SolverConfig {
        cells_per_wavelength: 8.0,
        ..SolverConfig::default()
    }
}

fn circle(center: [f64; 2], radius: f64, eps: Complex64) -> ShapeSpec {
    ShapeSpec {
        center,
        geometry: Geometry::Circle { radius },
        permittivity: eps,
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Centered 0.3 m cylinder of 4+0.4i at 15 cells per wavelength against
/// the cylindrical series: relative RMS <= 2%, at most 60 s.
fn mie_agreement() -> Verdict {
    let l = layout();
    let eps = Complex64::new(4.0, 0.4);
    let spec = circle([1.5, 1.5], 0.3, eps);
    let cfg = SolverConfig {
        cells_per_wavelength: 15.0,
        ..SolverConfig::default()
    };
    let sim = ForwardSimulator::at_config_resolution(l.clone(), cfg).map_err(err)?;
    let (_, chi) = rasterize(&spec, sim.grid()).map_err(err)?;
    let start = Instant::now();
    let w = sim.simulate(&chi).map_err(err)?.matrix;
    let secs = start.elapsed().as_secs_f64();
    let reference = mie_cylinder_reference(
        0.3,
        [1.5, 1.5],
        eps,
        &l,
        recommended_terms(l.wavenumber(), 0.3),
    )
    .map_err(err)?;
    let num: f64 = w
        .values()
        .iter()
        .zip(reference.values())
        .map(|(a, b)| (a - b).powi(2))
        .sum();
    let den: f64 = reference.values().iter().map(|b| b * b).sum();
    let rms = (num / den).sqrt();
    Ok((
        rms <= 0.02 && secs <= 60.0,
        format!("relative RMS {rms:.3e} (<= 2e-2), {secs:.1} s (<= 60 s)"),
    ))
}

/// J1 from its power series, independent of the library's Bessel code.
fn series_j1(x: f64) -> f64 {
    let q = -x * x / 4.0;
    let mut term = x / 2.0;
    let mut sum = term;
    for n in 1..40 {
        term *= q / (n as f64 * (n + 1) as f64);
        sum += term;
    }
    sum
}

/// Dense Green's matrix of the discretized operator on `grid`.
fn dense_kernel(grid: &DoiGrid, k: f64) -> Vec<Complex64> {
    let n = grid.len();
    let nx = grid.nx();
    let a = grid.equivalent_radius();
    let weight = 2.0 * std::f64::consts::PI * a * series_j1(k * a) / k;
    let centers: Vec<[f64; 2]> = (0..n).map(|c| grid.cell_center(c % nx, c / nx)).collect();
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = if i == j {
                self_cell_coupling(k, a)
            } else {
                k * k * weight * green2d(k, centers[j], centers[i]).unwrap()
            };
        }
    }
    out
}

/// FFT operator against the dense assembly on 8x8 and 16x16 grids,
/// 100 random (chi, u) trials each: relative error <= 1e-12.
fn operator_equivalence() -> Verdict {
    let l = layout();
    let k = l.wavenumber();
    let cfg = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for n in [8usize, 16] {
        let cell = l.wavelength() / 10.0;
        let grid = DoiGrid::new(cell * n as f64, cell * n as f64, n, n).map_err(err)?;
        let dense = dense_kernel(&grid, k);
        let len = grid.len();
        for _ in 0..100 {
            let chi = Array2::from_shape_fn((n, n), |_| {
                Complex64::new(rng.random_range(0.0..80.0), rng.random_range(0.0..8.0))
            });
            let u = Array2::from_shape_fn((n, n), |_| {
                Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            let field = FieldGrid {
                grid,
                values: u.clone(),
                kind: FieldKind::Total,
            };
            let contrast = ContrastMap {
                grid,
                chi: chi.clone(),
            };
            let fast = apply_ls_operator(&contrast, &field, k, &cfg).map_err(err)?;
            let chi: Vec<Complex64> = chi.iter().copied().collect();
            let u: Vec<Complex64> = u.iter().copied().collect();
            let (mut diff, mut norm) = (0.0, 0.0);
            for i in 0..len {
                let mut want = u[i];
                for j in 0..len {
                    want -= dense[i * len + j] * chi[j].conj() * u[j];
                }
                diff += (fast.values[[i / n, i % n]] - want).norm_sqr();
                norm += want.norm_sqr();
            }
            worst = worst.max((diff / norm).sqrt());
        }
    }
    Ok((
        worst <= 1e-12,
        format!("worst relative error {worst:.3e} (<= 1e-12) over 200 trials"),
    ))
}

/// Noiseless W over 20 random dataset scenes: max relative
/// |P(t->r) - P(r->t)| <= 1e-6.
fn reciprocity() -> Verdict {
    let cfg = SolverConfig {
        tolerance: 1e-10,
        ..desk_solver()
    };
    let sim = ForwardSimulator::at_config_resolution(layout(), cfg).map_err(err)?;
    let shapes = ShapeConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let spec = sample_shape(&mut rng, &shapes, sim.grid()).map_err(err)?;
        let (_, chi) = rasterize(&spec, sim.grid()).map_err(err)?;
        let w = sim.simulate(&chi).map_err(err)?.matrix;
        for t in 0..20 {
            for r in t + 1..20 {
                let (a, b) = (w.get(t, r).unwrap(), w.get(r, t).unwrap());
                worst = worst.max((a - b).abs() / a.max(b));
            }
        }
    }
    Ok((
        worst <= 1e-6,
        format!("max relative asymmetry {worst:.3e} (<= 1e-6) over 20 scenes"),
    ))
}

/// chi == 0 everywhere: scattered power <= 1e-10 of incident power, both
/// at the receivers and as a field over the domain.
fn empty_scene_null() -> Verdict {
    let sim = ForwardSimulator::at_config_resolution(layout(), desk_solver()).map_err(err)?;
    let chi = ContrastMap::zeros(*sim.grid());
    let w = sim.simulate(&chi).map_err(err)?.matrix;
    let free = sim.layout().free_space_powers();
    let mut worst = 0.0f64;
    for (p, f) in w.values().iter().zip(free.values()) {
        worst = worst.max((p - f).abs() / f);
    }
    let k = sim.layout().wavenumber();
    for tx in [0, 7, 13] {
        let inc = incident_field(tx, sim.layout(), sim.grid()).map_err(err)?;
        let total = sim.solve_field(&chi, tx).map_err(err)?.field;
        // The operator itself, with no empty-support shortcut.
        let applied = apply_ls_operator(&chi, &inc.field, k, sim.config()).map_err(err)?;
        let power: f64 = inc.field.values.iter().map(|v| v.norm_sqr()).sum();
        for f in [&total, &applied] {
            let scat: f64 = f
                .values
                .iter()
                .zip(&inc.field.values)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum();
            worst = worst.max(scat / power);
        }
    }
    Ok((
        worst <= 1e-10,
        format!("scattered/incident {worst:.3e} (<= 1e-10)"),
    ))
}

fn gen_desk(out: &Path) -> Result<f64, String> {
    let start = Instant::now();
    let o = Command::new(env!("CARGO_BIN_EXE_wisp"))
        .args([
            "--preset",
            "desk",
            "--out",
            out.to_str().unwrap(),
            "gen-dataset",
        ])
        .env_remove("WISP_OUTPUT_DIR")
        .env_remove("WISP_JOBS")
        .output()
        .map_err(err)?;
    if !o.status.success() {
        return Err(format!(
            "gen-dataset failed: {}",
            String::from_utf8_lossy(&o.stderr)
        ));
    }
    Ok(start.elapsed().as_secs_f64())
}

/// Desk preset generated twice: byte-identical manifest and shards, each
/// run within an hour.
fn dataset_determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(err)?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let ta = gen_desk(&a)?;
    let tb = gen_desk(&b)?;
    let manifest = DatasetManifest::load(&a).map_err(err)?;
    let mut files = vec![MANIFEST_FILE.to_string()];
    files.extend(manifest.shards.iter().map(|s| s.file.clone()));
    let mut differing = Vec::new();
    for f in &files {
        if std::fs::read(a.join(f)).map_err(err)? != std::fs::read(b.join(f)).map_err(err)? {
            differing.push(f.clone());
        }
    }
    let ok = differing.is_empty() && manifest.total == 200 && ta <= 3600.0 && tb <= 3600.0;
    Ok((
        ok,
        format!(
            "{} samples, {} files compared, differing {differing:?}, runs {ta:.0} s and {tb:.0} s (<= 3600 s)",
            manifest.total,
            files.len()
        ),
    ))
}

/// 20 low-contrast circles (eps 1.1): mean Physical-60 IoU >= 0.2.
fn baseline_sanity() -> Verdict {
    let l = layout();
    let sim = ForwardSimulator::at_config_resolution(l.clone(), desk_solver()).map_err(err)?;
    let free = l.free_space_powers();
    let coarse = coarse_grid(&l).map_err(err)?;
    let op = build_phaseless_operator(&l, &coarse).map_err(err)?;
    let target = DoiGrid::square(3.0, 256).map_err(err)?;
    let cfg = ShapeConfig {
        palette: vec![Complex64::new(1.1, 0.0)],
        ..ShapeConfig::default().only(ShapeKind::Circle)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut samples: Vec<(MeasurementMatrix, GroundTruthMask)> = Vec::new();
    for _ in 0..20 {
        let spec = sample_shape(&mut rng, &cfg, &coarse).map_err(err)?;
        let (_, chi) = rasterize(&spec, sim.grid()).map_err(err)?;
        let (gt, _) = rasterize(&spec, &target).map_err(err)?;
        samples.push((sim.simulate(&chi).map_err(err)?.matrix, gt));
    }
    let seg = Segmentation::default();
    let sel = select_lambda(&op, &free, &samples, &LAMBDA_FACTORS, &seg).map_err(err)?;
    let mut total = 0.0;
    for (w, gt) in &samples {
        let res = run_baseline(w, &free, &op, sel.lambda, &seg).map_err(err)?;
        total += physical60_iou(&res.mask60, gt).map_err(err)?;
    }
    let mean = total / samples.len() as f64;
    Ok((
        mean >= 0.2,
        format!("mean Physical-60 IoU {mean:.3} (>= 0.2) over 20 scenes"),
    ))
}

/// Exact IoU values: identical masks 1, disjoint masks 0, and a 2x2 block
/// against itself shifted one pixel right 1/3.
fn iou_examples() -> Verdict {
    let a = Array2::from_shape_fn((4, 4), |(y, x)| (y < 2 && x < 2) as u8);
    let disjoint = Array2::from_shape_fn((4, 4), |(y, x)| (y >= 2 && x >= 2) as u8);
    let shifted = Array2::from_shape_fn((4, 4), |(y, x)| (y < 2 && (1..3).contains(&x)) as u8);
    let got = [iou(&a, &a), iou(&a, &disjoint), iou(&a, &shifted)]
        .into_iter()
        .collect::<Result<Vec<f64>, _>>()
        .map_err(err)?;
    let ok = got[0] == 1.0 && got[1] == 0.0 && got[2] == 1.0 / 3.0;
    Ok((
        ok,
        format!(
            "identical {}, disjoint {}, shifted {}",
            got[0], got[1], got[2]
        ),
    ))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("mie-oracle-agreement", mie_agreement),
        ("operator-equivalence", operator_equivalence),
        ("reciprocity", reciprocity),
        ("empty-scene-null", empty_scene_null),
        ("dataset-determinism", dataset_determinism),
        ("baseline-pipeline-sanity", baseline_sanity),
        ("iou-unit-suite", iou_examples),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let (ok, detail) = match check() {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!ok);
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
