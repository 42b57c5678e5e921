//! Command-line interface: argument parsing and subcommand dispatch.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use wisp_core::em::{mie_cylinder_reference, recommended_terms, ForwardSimulator};
use wisp_core::scene::{rasterize, sample_shape, Geometry, ShapeKind, ShapeSpec};

use crate::baseline::{choose_lambda, score_split, BaselineModel};
use crate::config::{Preset, RunConfig, SplitName};
use crate::dataset::{derive_seed, generate_dataset, Dataset};
use crate::error::CliError;
use crate::export::{heatmap_image, mask_image};
use crate::report::{build_report, read_records, render_table, write_records, write_report};
use crate::runlog::RunLog;

#[derive(Debug, Parser)]
#[command(
    name = "wisp",
    version,
    about = "Phaseless WiFi imaging: simulation, datasets and a physics baseline"
)]
pub struct Cli {
    /// TOML configuration; missing keys take the preset's values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Starting configuration before `--config` is applied.
    #[arg(long, global = true, value_enum)]
    pub preset: Option<Preset>,
    /// Overrides `dataset.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "WISP_JOBS")]
    pub jobs: Option<usize>,
    /// Output location of the command.
    #[arg(long, global = true, env = "WISP_OUTPUT_DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a sharded dataset with its manifest.
    GenDataset,
    /// Simulate one scene and write its measurement matrix as JSON.
    Forward {
        /// Scene file holding one shape as JSON.
        #[arg(long, conflicts_with = "shape")]
        scene: Option<PathBuf>,
        /// Draw a random shape of this family.
        #[arg(long)]
        shape: Option<ShapeKind>,
        /// Also write PNGs of the measurement matrix and the target mask.
        #[arg(long)]
        png: bool,
    },
    /// Run the physics baseline over a dataset and write per-sample scores.
    Invert {
        #[arg(long)]
        dataset: PathBuf,
        /// Overrides `eval.split`.
        #[arg(long, value_enum)]
        split: Option<SplitName>,
        /// Write estimate/mask triptychs for the first N scored samples.
        #[arg(long, default_value_t = 0)]
        figures: usize,
    },
    /// Aggregate one or more per-sample score files into a report.
    Eval {
        /// Score CSVs with columns sample_id,shape,method,iou,pixel_accuracy.
        #[arg(required = true)]
        records: Vec<PathBuf>,
    },
    /// Render stored samples as PNG.
    Export {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, required = true)]
        id: Vec<u64>,
    },
    /// Compare the forward solver with the cylinder series solution.
    Oracle {
        #[arg(long, default_value_t = 0.3)]
        radius: f64,
        #[arg(long, default_value_t = 4.0)]
        eps_re: f64,
        #[arg(long, default_value_t = 0.4)]
        eps_im: f64,
        /// Exit with status 1 above this relative RMS error.
        #[arg(long, default_value_t = 0.02)]
        max_error: f64,
    },
    /// Print the effective configuration as TOML.
    Config,
}

/// Effective configuration: preset, then file, then flags.
pub fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let base = RunConfig::preset(cli.preset.unwrap_or(Preset::Full));
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            RunConfig::parse_over(&text, base)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => base,
    };
    if let Some(seed) = cli.seed {
        cfg.dataset.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display().to_string(), e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(path.display().to_string(), e))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Failed(format!("thread pool: {e}")))?;
    }
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::GenDataset => gen_dataset(&cfg, cli.out.as_deref()),
        Command::Forward { scene, shape, png } => {
            forward(&cfg, cli.out.as_deref(), scene.as_deref(), *shape, *png)
        }
        Command::Invert {
            dataset,
            split,
            figures,
        } => invert(&cli, dataset, *split, *figures),
        Command::Eval { records } => eval(records, cli.out.as_deref()),
        Command::Export { dataset, id } => export(dataset, id, cli.out.as_deref()),
        Command::Oracle {
            radius,
            eps_re,
            eps_im,
            max_error,
        } => oracle(&cfg, *radius, Complex64::new(*eps_re, *eps_im), *max_error),
        Command::Config => {
            print!("{}", cfg.render());
            Ok(())
        }
    }
}

fn gen_dataset(cfg: &RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let dir = out.map_or_else(|| cfg.dataset.output_dir.clone(), Path::to_path_buf);
    if dir.join(crate::dataset::MANIFEST_FILE).exists() {
        return Err(CliError::Config(format!(
            "{} already holds a dataset; choose another output directory",
            dir.display()
        )));
    }
    create_dir(&dir)?;
    let mut log = RunLog::create(&dir.join("run.jsonl"))?;
    let start = Instant::now();
    let result = generate_dataset(cfg, &dir, &mut log);
    log.finish()?;
    let m = result?;
    eprintln!(
        "wrote {} samples in {} shards to {} ({:.1} s)",
        m.total,
        m.shards.len(),
        dir.display(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn forward(
    cfg: &RunConfig,
    out: Option<&Path>,
    scene: Option<&Path>,
    shape: Option<ShapeKind>,
    png: bool,
) -> Result<(), CliError> {
    let spec: ShapeSpec = match scene {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::io(path.display().to_string(), e))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => {
            let mut rng = ChaCha8Rng::from_seed(derive_seed(b"forward", &[cfg.dataset.seed]));
            let scene = shape.map_or_else(|| cfg.scene.clone(), |k| cfg.scene.only(k));
            let grid = cfg
                .target_grid()
                .map_err(|e| CliError::Config(format!("dataset.target_cells: {e}")))?;
            sample_shape(&mut rng, &scene, &grid)
                .map_err(|e| CliError::Config(format!("scene: {e}")))?
        }
    };
    let target = cfg
        .target_grid()
        .map_err(|e| CliError::Config(format!("dataset.target_cells: {e}")))?;
    let sim = ForwardSimulator::at_config_resolution(cfg.layout()?, cfg.physics.solver.clone())
        .map_err(|e| CliError::Config(format!("physics: {e}")))?;
    let (mask, _) =
        rasterize(&spec, &target).map_err(|e| CliError::Config(format!("scene: {e}")))?;
    let (_, chi) =
        rasterize(&spec, sim.grid()).map_err(|e| CliError::Config(format!("scene: {e}")))?;
    let result = sim
        .simulate(&chi)
        .map_err(|e| CliError::SolverBudget(format!("forward solve: {e}")))?;
    let mut w = result.matrix;
    if let Some(noise) = cfg.noise(cfg.dataset.seed) {
        w = noise
            .apply(&w)
            .map_err(|e| CliError::Config(format!("physics.snr_db: {e}")))?;
    }
    let w = w.to_unit(cfg.dataset.unit);
    let dir = out.map_or_else(|| PathBuf::from("forward"), Path::to_path_buf);
    create_dir(&dir)?;
    let rows: Vec<Vec<f64>> = w.values().rows().into_iter().map(|r| r.to_vec()).collect();
    write_json(
        &dir.join("forward.json"),
        &json!({
            "scene": spec,
            "unit": w.unit(),
            "grid": [sim.grid().nx(), sim.grid().ny()],
            "measurement": rows,
            "solver": result.stats,
        }),
    )?;
    if png {
        heatmap_image(w.values(), false)
            .scaled(19 * 16, 20 * 16)
            .save(&dir.join("measurement.png"))?;
        mask_image(&mask.pixels).save(&dir.join("mask.png"))?;
    }
    let worst = result.stats.iter().map(|s| s.residual).fold(0.0, f64::max);
    eprintln!(
        "{} on a {}x{} grid, worst residual {worst:.2e}",
        spec.kind(),
        sim.grid().nx(),
        sim.grid().ny()
    );
    Ok(())
}

fn invert(
    cli: &Cli,
    dataset: &Path,
    split: Option<SplitName>,
    figures: usize,
) -> Result<(), CliError> {
    let ds = Dataset::open(dataset)?;
    ds.verify_shards()?;
    // Physics and data come from the manifest; the baseline and evaluation
    // sections may be overridden by the current configuration.
    let cfg = if cli.config.is_some() || cli.preset.is_some() {
        load_config(cli)?
    } else {
        ds.manifest.config.clone()
    };
    let split = split.unwrap_or(cfg.eval.split);
    let dir = cli.out.clone().unwrap_or_else(|| dataset.join("baseline"));
    create_dir(&dir)?;
    let fig_dir = dir.join("figures");
    if figures > 0 {
        create_dir(&fig_dir)?;
    }
    let mut log = RunLog::create(&dir.join("run.jsonl"))?;
    let model = BaselineModel::for_dataset(&ds)?;
    let choice = choose_lambda(&ds, &model, &cfg.baseline)?;
    log.event("lambda", serde_json::to_value(&choice).expect("serializes"));
    let records = score_split(
        &ds,
        &model,
        &cfg.baseline,
        choice.lambda,
        split,
        &cfg.eval.methods,
        (figures > 0).then_some((fig_dir.as_path(), figures)),
    )?;
    write_records(&dir.join("records.csv"), &records)?;
    write_json(&dir.join("lambda.json"), &choice)?;
    let table = build_report(&records)?;
    write_report(&dir, &table)?;
    log.event("done", json!({ "records": records.len() }));
    log.finish()?;
    print!("{}", render_table(&table));
    eprintln!(
        "lambda = {:.3e} ({:.0e} x ||A^T A||)",
        choice.lambda, choice.factor
    );
    Ok(())
}

fn eval(paths: &[PathBuf], out: Option<&Path>) -> Result<(), CliError> {
    let mut records = Vec::new();
    for p in paths {
        records.extend(read_records(p)?);
    }
    let table = build_report(&records)?;
    let dir = out.map_or_else(|| PathBuf::from("report"), Path::to_path_buf);
    create_dir(&dir)?;
    write_report(&dir, &table)?;
    print!("{}", render_table(&table));
    Ok(())
}

fn export(dataset: &Path, ids: &[u64], out: Option<&Path>) -> Result<(), CliError> {
    let ds = Dataset::open(dataset)?;
    let dir = out.map_or_else(|| dataset.join("figures"), Path::to_path_buf);
    create_dir(&dir)?;
    for &id in ids {
        let s = ds.read(id)?;
        mask_image(&s.mask).save(&dir.join(format!("sample-{id:06}-mask.png")))?;
        let (r, c) = s.measurement.dim();
        heatmap_image(&s.measurement.mapv(f64::from), false)
            .scaled(r * 16, c * 16)
            .save(&dir.join(format!("sample-{id:06}-measurement.png")))?;
    }
    eprintln!("wrote {} sample(s) to {}", ids.len(), dir.display());
    Ok(())
}

fn oracle(cfg: &RunConfig, radius: f64, eps: Complex64, max_error: f64) -> Result<(), CliError> {
    let layout = cfg.layout()?;
    let [ex, ey] = layout.extent();
    let center = [ex / 2.0, ey / 2.0];
    let spec = ShapeSpec {
        center,
        geometry: Geometry::Circle { radius },
        permittivity: eps,
    };
    let sim = ForwardSimulator::at_config_resolution(layout.clone(), cfg.physics.solver.clone())
        .map_err(|e| CliError::Config(format!("physics: {e}")))?;
    let (_, chi) =
        rasterize(&spec, sim.grid()).map_err(|e| CliError::Config(format!("oracle: {e}")))?;
    let start = Instant::now();
    let w = sim
        .simulate(&chi)
        .map_err(|e| CliError::SolverBudget(format!("oracle solve: {e}")))?
        .matrix;
    let seconds = start.elapsed().as_secs_f64();
    let terms = recommended_terms(layout.wavenumber(), radius);
    let reference = mie_cylinder_reference(radius, center, eps, &layout, terms)
        .map_err(|e| CliError::Config(format!("oracle: {e}")))?;
    let (num, den) = w
        .values()
        .iter()
        .zip(reference.values())
        .fold((0.0, 0.0), |(n, d), (a, b)| {
            (n + (a - b).powi(2), d + b * b)
        });
    let error = (num / den).sqrt();
    println!(
        "{}",
        json!({
            "radius_m": radius,
            "eps_r": [eps.re, eps.im],
            "cells_per_wavelength": cfg.physics.solver.cells_per_wavelength,
            "series_terms": terms,
            "relative_rms": error,
            "seconds": seconds,
        })
    );
    if error > max_error {
        return Err(CliError::Failed(format!(
            "relative RMS {error:.3e} exceeds {max_error:.3e}"
        )));
    }
    Ok(())
}
