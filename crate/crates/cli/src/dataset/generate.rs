//! Dataset generation. Sample `id` belongs to family `id / per_family` and
//! draws everything from a ChaCha8 stream seeded by `(master, id, draw)`, so
//! the output is independent of thread count and scheduling.

use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};
use wisp_core::em::ForwardSimulator;
use wisp_core::scene::{rasterize, sample_shape, ShapeConfig, ShapeKind};
use wisp_core::DoiGrid;

use crate::config::{hex, RunConfig, SplitName};
use crate::error::CliError;
use crate::runlog::RunLog;

use super::codec::{self, SamplePair, FORMAT_VERSION};
use super::manifest::{DatasetManifest, SampleEntry, ShardEntry, SplitInfo, MANIFEST_FILE};
use super::normalize::{to_db, Moments};
use super::split::stratified_split;
use super::{derive_seed, shard_file_name};

/// Draws allowed for one sample before generation gives up outright.
pub const MAX_DRAWS: u32 = 16;

struct Context<'a> {
    cfg: &'a RunConfig,
    sim: ForwardSimulator,
    target: DoiGrid,
    families: Vec<ShapeConfig>,
}

struct Produced {
    sample: SamplePair,
    /// Reasons for discarded draws, in draw order.
    rejected: Vec<String>,
    iterations: usize,
}

fn produce(ctx: &Context, id: u64) -> Result<Produced, CliError> {
    let cfg = ctx.cfg;
    let kind = ShapeKind::ALL[(id / cfg.dataset.per_family as u64) as usize];
    let mut rejected = Vec::new();
    for draw in 0..MAX_DRAWS {
        let mut rng =
            ChaCha8Rng::from_seed(derive_seed(b"sample", &[cfg.dataset.seed, id, draw as u64]));
        let spec = sample_shape(&mut rng, &ctx.families[kind.index()], &ctx.target)
            .map_err(|e| CliError::Config(format!("scene: {e}")))?;
        let noise_seed = rng.next_u64();
        let rasters = rasterize(&spec, &ctx.target)
            .and_then(|(mask, _)| rasterize(&spec, ctx.sim.grid()).map(|(_, chi)| (mask, chi)));
        let (mask, chi) = match rasters {
            Ok(r) => r,
            Err(e) => {
                rejected.push(format!("draw {draw}: {e}"));
                continue;
            }
        };
        let sim = match ctx.sim.simulate(&chi) {
            Ok(s) => s,
            Err(e) => {
                rejected.push(format!("draw {draw}: {e}"));
                continue;
            }
        };
        let mut w = sim.matrix;
        if let Some(noise) = cfg.noise(noise_seed) {
            w = noise
                .apply(&w)
                .map_err(|e| CliError::Config(format!("physics.snr_db: {e}")))?;
        }
        let w = w.to_unit(cfg.dataset.unit);
        return Ok(Produced {
            sample: SamplePair {
                id,
                shape: kind,
                unit: cfg.dataset.unit,
                measurement: w.values().mapv(|v| v as f32),
                mask: mask.pixels,
            },
            rejected,
            iterations: sim.stats.iter().map(|s| s.iterations).sum(),
        });
    }
    Err(CliError::SolverBudget(format!(
        "sample {id}: all {MAX_DRAWS} draws failed; last: {}",
        rejected.last().map_or("", String::as_str)
    )))
}

/// Generates the dataset described by `cfg` into `out`, which must not
/// already hold a manifest. Runs on the current rayon pool.
pub fn generate_dataset(
    cfg: &RunConfig,
    out: &Path,
    log: &mut RunLog,
) -> Result<DatasetManifest, CliError> {
    cfg.validate()?;
    if out.join(MANIFEST_FILE).exists() {
        return Err(CliError::Config(format!(
            "{} already holds a dataset; choose another output directory",
            out.display()
        )));
    }
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out.display().to_string(), e))?;

    let layout = cfg.layout()?;
    let sim = ForwardSimulator::at_config_resolution(layout.clone(), cfg.physics.solver.clone())
        .map_err(|e| CliError::Config(format!("physics: {e}")))?;
    let target = cfg
        .target_grid()
        .map_err(|e| CliError::Config(format!("dataset.target_cells: {e}")))?;
    let ctx = Context {
        cfg,
        sim,
        target,
        families: ShapeKind::ALL.iter().map(|&k| cfg.scene.only(k)).collect(),
    };
    let d = &cfg.dataset;
    let total = 4 * d.per_family;
    let kinds: Vec<(u64, ShapeKind)> = (0..total as u64)
        .map(|id| (id, ShapeKind::ALL[id as usize / d.per_family]))
        .collect();
    let split = stratified_split(&kinds, d.train_ratio, d.seed)?;
    let mut is_train = vec![false; total];
    for &id in &split.train {
        is_train[id as usize] = true;
    }
    let budget = (d.failure_budget * total as f64).floor() as usize;
    let physics_digest = cfg.physics_digest()?;
    log.event(
        "start",
        json!({
            "total": total,
            "shard_size": d.shard_size,
            "grid": [ctx.sim.grid().nx(), ctx.sim.grid().ny()],
            "threads": rayon::current_num_threads(),
            "physics_digest": physics_digest,
        }),
    );

    let mut shards = Vec::new();
    let mut samples = Vec::with_capacity(total);
    let mut moments = Moments::default();
    let mut redraws = 0usize;
    let mut record_size = 0;
    for (index, start) in (0..total).step_by(d.shard_size).enumerate() {
        let ids = start as u64..(start + d.shard_size).min(total) as u64;
        let produced: Vec<Produced> = ids
            .into_par_iter()
            .map(|id| produce(&ctx, id))
            .collect::<Result<_, _>>()?;
        let records: Vec<SamplePair> = produced.iter().map(|p| p.sample.clone()).collect();
        let file = shard_file_name(index);
        let bytes = codec::write_shard(&out.join(&file), &records)?;
        let header = codec::decode_shard_header(&bytes)?;
        record_size = header.record_size;
        for (i, p) in produced.iter().enumerate() {
            for reason in &p.rejected {
                log.event("redraw", json!({ "id": p.sample.id, "reason": reason }));
            }
            redraws += p.rejected.len();
            let train = is_train[p.sample.id as usize];
            if train {
                moments = moments.merge(Moments::of(to_db(&p.sample.measurement, p.sample.unit)));
            }
            samples.push(SampleEntry {
                id: p.sample.id,
                shape: p.sample.shape,
                shard: index,
                offset: header.offset_of(i),
                split: if train {
                    SplitName::Train
                } else {
                    SplitName::Eval
                },
                redraws: p.rejected.len() as u32,
            });
        }
        log.event(
            "shard",
            json!({
                "file": file,
                "records": records.len(),
                "solver_iterations": produced.iter().map(|p| p.iterations).sum::<usize>(),
            }),
        );
        shards.push(ShardEntry {
            file,
            records: records.len(),
            sha256: hex(&Sha256::digest(&bytes)),
        });
        if redraws > budget {
            log.event("abort", json!({ "redraws": redraws, "budget": budget }));
            return Err(CliError::SolverBudget(format!(
                "{redraws} redrawn samples exceed the budget of {budget} ({} of {total})",
                d.failure_budget
            )));
        }
    }

    let normalization = moments.finish()?;
    // The output location is not part of the dataset's identity.
    let mut stored = cfg.clone();
    stored.dataset.output_dir = ".".into();
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        master_seed: d.seed,
        physics_digest,
        config: stored,
        unit: d.unit,
        measurement_shape: [layout.m() - 1, layout.m()],
        mask_shape: [target.ny(), target.nx()],
        record_size,
        per_family: ShapeKind::ALL.iter().map(|&k| (k, d.per_family)).collect(),
        total,
        normalization,
        split: SplitInfo {
            ratio: d.train_ratio,
            seed: d.seed,
            train: split.train.len(),
            eval: split.eval.len(),
        },
        shards,
        samples,
    };
    manifest.validate()?;
    manifest.save(out)?;
    log.event("done", json!({ "total": total, "redraws": redraws }));
    Ok(manifest)
}
