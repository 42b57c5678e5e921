//! Physics baseline over a stored dataset: lambda selection on the training
//! split, then Physical-60 and Physical-256 scores on the chosen split.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use wisp_core::em::{MeasurementMatrix, NodeLayout};
use wisp_core::metrics::EvalRecord;
use wisp_core::physbase::{
    build_phaseless_operator, coarse_grid, downsample_mask, resample_nearest, run_baseline,
    select_lambda, LambdaSelection, LinearizedOperator,
};
use wisp_core::scene::GroundTruthMask;

use crate::config::{BaselineConfig, SplitName};
use crate::dataset::{Dataset, SamplePair};
use crate::error::CliError;
use crate::export::triptych;

pub const PHYSICAL_60: &str = "physical-60";
pub const PHYSICAL_256: &str = "physical-256";

/// Operator and reference powers shared by every sample of a dataset.
pub struct BaselineModel {
    pub layout: NodeLayout,
    pub operator: LinearizedOperator,
    pub free: MeasurementMatrix,
}

impl BaselineModel {
    pub fn for_dataset(ds: &Dataset) -> Result<Self, CliError> {
        let layout = ds.manifest.config.layout()?;
        let grid = coarse_grid(&layout).map_err(|e| CliError::Config(format!("physics: {e}")))?;
        let operator = build_phaseless_operator(&layout, &grid)
            .map_err(|e| CliError::Failed(format!("operator: {e}")))?;
        let free = layout.free_space_powers();
        Ok(Self {
            layout,
            operator,
            free,
        })
    }
}

/// Lambda search outcome, or the fixed weight from the configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaChoice {
    pub lambda: f64,
    pub factor: f64,
    /// Candidate `(lambda, mean Physical-60 IoU)` pairs; empty when fixed.
    pub scores: Vec<(f64, f64)>,
    /// Training samples the search used.
    pub tuning_samples: usize,
}

fn load_pair(ds: &Dataset, id: u64) -> Result<(SamplePair, GroundTruthMask), CliError> {
    let s = ds.read(id)?;
    let gt = s.ground_truth(ds.target_grid()?)?;
    Ok((s, gt))
}

pub fn choose_lambda(
    ds: &Dataset,
    model: &BaselineModel,
    cfg: &BaselineConfig,
) -> Result<LambdaChoice, CliError> {
    let norm = model.operator.normal_norm();
    if let Some(factor) = cfg.lambda_factor {
        return Ok(LambdaChoice {
            lambda: factor * norm,
            factor,
            scores: Vec::new(),
            tuning_samples: 0,
        });
    }
    let mut ids: Vec<u64> = ds
        .manifest
        .select(SplitName::Train)
        .iter()
        .map(|s| s.id)
        .collect();
    if cfg.tuning_samples > 0 && cfg.tuning_samples < ids.len() {
        // Every family is represented: take an evenly spaced subset by id.
        let n = ids.len();
        ids = (0..cfg.tuning_samples)
            .map(|i| ids[i * n / cfg.tuning_samples])
            .collect();
    }
    let samples: Vec<(MeasurementMatrix, GroundTruthMask)> = ids
        .par_iter()
        .map(|&id| {
            let (s, gt) = load_pair(ds, id)?;
            Ok((s.linear_matrix()?, gt))
        })
        .collect::<Result<_, CliError>>()?;
    let LambdaSelection { lambda, scores } = select_lambda(
        &model.operator,
        &model.free,
        &samples,
        &cfg.lambda_factors,
        &cfg.segmentation,
    )
    .map_err(|e| CliError::Failed(format!("lambda search: {e}")))?;
    Ok(LambdaChoice {
        lambda,
        factor: lambda / norm,
        scores,
        tuning_samples: samples.len(),
    })
}

/// Scores every sample of `split` under `methods`; rows are ordered by
/// sample id, then by method in the given order. With `figures`, writes a
/// triptych PNG per sample into that directory.
pub fn score_split(
    ds: &Dataset,
    model: &BaselineModel,
    cfg: &BaselineConfig,
    lambda: f64,
    split: SplitName,
    methods: &[String],
    figures: Option<(&Path, usize)>,
) -> Result<Vec<EvalRecord>, CliError> {
    let entries = ds.manifest.select(split);
    let per_sample: Vec<Vec<EvalRecord>> = entries
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let (s, gt) = load_pair(ds, e.id)?;
            let res = run_baseline(
                &s.linear_matrix()?,
                &model.free,
                &model.operator,
                lambda,
                &cfg.segmentation,
            )
            .map_err(|err| CliError::Failed(format!("sample {}: {err}", e.id)))?;
            let full = resample_nearest(&res.mask60, gt.pixels.nrows());
            if let Some((dir, n)) = figures {
                if i < n {
                    let fig = triptych(
                        &res.estimate.contrast,
                        &res.mask60,
                        &full,
                        gt.pixels.nrows(),
                    )?;
                    fig.save(&dir.join(format!("sample-{:06}.png", e.id)))?;
                }
            }
            methods
                .iter()
                .map(|m| {
                    let (pred, truth) = match m.as_str() {
                        PHYSICAL_60 => {
                            (&res.mask60, downsample_mask(&gt.pixels, res.mask60.nrows()))
                        }
                        PHYSICAL_256 => (&full, gt.pixels.clone()),
                        other => {
                            return Err(CliError::Config(format!(
                                "eval.methods: unknown method {other:?}"
                            )))
                        }
                    };
                    EvalRecord::score(e.id, e.shape, m, pred, &truth)
                        .map_err(|err| CliError::Failed(format!("sample {}: {err}", e.id)))
                })
                .collect()
        })
        .collect::<Result<_, CliError>>()?;
    Ok(per_sample.into_iter().flatten().collect())
}
