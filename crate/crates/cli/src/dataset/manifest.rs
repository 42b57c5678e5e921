//! `manifest.json`: everything needed to locate, verify and reproduce a
//! generated dataset.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use wisp_core::em::PowerUnit;
use wisp_core::scene::ShapeKind;

use crate::config::{RunConfig, SplitName};
use crate::error::CliError;

use super::codec::FORMAT_VERSION;
use super::normalize::Normalization;
use super::split::train_count;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShardEntry {
    /// File name relative to the dataset directory.
    pub file: String,
    pub records: usize,
    /// Hex SHA-256 of the whole file.
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleEntry {
    pub id: u64,
    pub shape: ShapeKind,
    /// Index into [`DatasetManifest::shards`].
    pub shard: usize,
    /// Byte offset of the record within its shard.
    pub offset: u64,
    /// [`SplitName::Train`] or [`SplitName::Eval`].
    pub split: SplitName,
    /// Draws discarded after solver failures before this one succeeded.
    pub redraws: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitInfo {
    pub ratio: f64,
    pub seed: u64,
    pub train: usize,
    pub eval: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u16,
    pub master_seed: u64,
    pub physics_digest: String,
    /// Full configuration the dataset was generated with.
    pub config: RunConfig,
    pub unit: PowerUnit,
    /// `[rows, cols]` of each measurement matrix.
    pub measurement_shape: [usize; 2],
    /// `[height, width]` of each target mask.
    pub mask_shape: [usize; 2],
    pub record_size: usize,
    pub per_family: BTreeMap<ShapeKind, usize>,
    pub total: usize,
    /// Training-split dB statistics.
    pub normalization: Normalization,
    pub split: SplitInfo,
    pub shards: Vec<ShardEntry>,
    /// Ordered by id.
    pub samples: Vec<SampleEntry>,
}

impl DatasetManifest {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::io(path.display().to_string(), e))?;
        let m: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))?;
        if m.format_version != FORMAT_VERSION {
            return Err(super::codec::FormatError::Version {
                offset: 0,
                found: m.format_version,
                supported: FORMAT_VERSION,
            }
            .into());
        }
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(path.display().to_string(), e))
    }

    /// Internal consistency: counts, ids, shard references, split sizes per
    /// family and the physics digest against the embedded configuration.
    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Failed(format!("manifest: {msg}")));
        let sum: usize = self.per_family.values().sum();
        if sum != self.total || self.samples.len() != self.total {
            return fail(format!(
                "total {} disagrees with family counts {sum} or {} sample entries",
                self.total,
                self.samples.len()
            ));
        }
        for (i, s) in self.samples.iter().enumerate() {
            if s.id != i as u64 {
                return fail(format!("sample entry {i} has id {}", s.id));
            }
            if s.shard >= self.shards.len() {
                return fail(format!("sample {} names missing shard {}", s.id, s.shard));
            }
            if s.split == SplitName::All {
                return fail(format!("sample {} has no split side", s.id));
            }
        }
        let records: usize = self.shards.iter().map(|s| s.records).sum();
        if records != self.total {
            return fail(format!(
                "shards hold {records} records, expected {}",
                self.total
            ));
        }
        let (mut train, mut eval) = (0, 0);
        for (&kind, &n) in &self.per_family {
            let family: Vec<&SampleEntry> =
                self.samples.iter().filter(|s| s.shape == kind).collect();
            if family.len() != n {
                return fail(format!(
                    "family {kind}: {} entries, {n} declared",
                    family.len()
                ));
            }
            let t = family
                .iter()
                .filter(|s| s.split == SplitName::Train)
                .count();
            let want = train_count(n, self.split.ratio);
            if t.abs_diff(want) > 1 {
                return fail(format!(
                    "family {kind}: {t} training samples, expected {want}"
                ));
            }
            train += t;
            eval += n - t;
        }
        if (train, eval) != (self.split.train, self.split.eval) {
            return fail(format!(
                "split counts {train}/{eval} disagree with declared {}/{}",
                self.split.train, self.split.eval
            ));
        }
        if self.master_seed != self.config.dataset.seed {
            return fail("master seed differs from the embedded configuration".into());
        }
        let digest = self.config.physics_digest()?;
        if digest != self.physics_digest {
            return fail(format!(
                "physics digest {} does not match the embedded configuration ({digest})",
                self.physics_digest
            ));
        }
        Ok(())
    }

    /// Entries of one split side, or all of them, in id order.
    pub fn select(&self, split: SplitName) -> Vec<&SampleEntry> {
        self.samples
            .iter()
            .filter(|s| split == SplitName::All || s.split == split)
            .collect()
    }
}
