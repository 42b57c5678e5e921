//! Seeded train/eval split, stratified by shape family.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use wisp_core::scene::ShapeKind;

use crate::error::CliError;

use super::derive_seed;

/// Sorted sample ids on each side of the split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<u64>,
    pub eval: Vec<u64>,
}

/// Training count for a family of `n`: `round(ratio n)` kept inside
/// `[1, n - 1]` so both sides see every family.
pub fn train_count(n: usize, ratio: f64) -> usize {
    ((ratio * n as f64).round() as usize).clamp(1, n - 1)
}

/// Splits `(id, family)` pairs. Each family is shuffled with its own seed
/// derived from `seed`, so the result does not depend on input order.
pub fn stratified_split(
    samples: &[(u64, ShapeKind)],
    ratio: f64,
    seed: u64,
) -> Result<Split, CliError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(CliError::Config(format!(
            "split ratio {ratio} must lie in (0, 1)"
        )));
    }
    let mut families: BTreeMap<ShapeKind, Vec<u64>> = BTreeMap::new();
    for &(id, kind) in samples {
        families.entry(kind).or_default().push(id);
    }
    let mut split = Split {
        train: Vec::new(),
        eval: Vec::new(),
    };
    for (kind, mut ids) in families {
        if ids.len() < 2 {
            return Err(CliError::Config(format!(
                "family {kind} has {} sample(s); a split needs at least 2",
                ids.len()
            )));
        }
        ids.sort_unstable();
        let mut rng = ChaCha8Rng::from_seed(derive_seed(b"split", &[seed, kind.index() as u64]));
        ids.shuffle(&mut rng);
        let k = train_count(ids.len(), ratio);
        split.train.extend_from_slice(&ids[..k]);
        split.eval.extend_from_slice(&ids[k..]);
    }
    split.train.sort_unstable();
    split.eval.sort_unstable();
    Ok(split)
}
