//! On-disk dataset: sharded binary records plus a JSON manifest.

pub mod codec;
pub mod generate;
pub mod manifest;
pub mod normalize;
pub mod split;

use std::fs::File;
use std::io::{Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use wisp_core::em::{MeasurementMatrix, PowerUnit};
use wisp_core::scene::GroundTruthMask;
use wisp_core::DoiGrid;

pub use codec::{FormatError, SamplePair};
pub use generate::generate_dataset;
pub use manifest::{DatasetManifest, SampleEntry, ShardEntry, MANIFEST_FILE};
pub use normalize::Normalization;
pub use split::{stratified_split, Split};

use crate::config::hex;
use crate::error::CliError;

/// 32-byte RNG seed from SHA-256 over a domain tag and integers, so that
/// streams for different purposes and indices never coincide.
pub fn derive_seed(tag: &[u8], values: &[u64]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update((tag.len() as u64).to_le_bytes());
    h.update(tag);
    for v in values {
        h.update(v.to_le_bytes());
    }
    h.finalize().into()
}

pub fn shard_file_name(index: usize) -> String {
    format!("shard-{index:05}.bin")
}

/// Read access to a generated dataset.
pub struct Dataset {
    pub dir: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn open(dir: &Path) -> Result<Self, CliError> {
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest: DatasetManifest::load(dir)?,
        })
    }

    /// Reads one record by id without loading its whole shard.
    pub fn read(&self, id: u64) -> Result<SamplePair, CliError> {
        let entry = self
            .manifest
            .samples
            .get(id as usize)
            .ok_or_else(|| CliError::Failed(format!("no sample with id {id}")))?;
        let path = self.dir.join(&self.manifest.shards[entry.shard].file);
        let io = |e| CliError::io(path.display().to_string(), e);
        let mut f = File::open(&path).map_err(io)?;
        f.seek(SeekFrom::Start(entry.offset)).map_err(io)?;
        let mut buf = Vec::with_capacity(self.manifest.record_size);
        f.take(self.manifest.record_size as u64)
            .read_to_end(&mut buf)
            .map_err(io)?;
        let (s, _) = codec::decode_record(&buf, entry.offset)?;
        if s.id != id || s.shape != entry.shape {
            return Err(CliError::Failed(format!(
                "{}: record at byte {} is sample {} ({}), manifest expects {id} ({})",
                path.display(),
                entry.offset,
                s.id,
                s.shape,
                entry.shape
            )));
        }
        Ok(s)
    }

    /// Recomputes every shard hash against the manifest.
    pub fn verify_shards(&self) -> Result<(), CliError> {
        for s in &self.manifest.shards {
            let path = self.dir.join(&s.file);
            let bytes =
                std::fs::read(&path).map_err(|e| CliError::io(path.display().to_string(), e))?;
            let got = hex(&Sha256::digest(&bytes));
            if got != s.sha256 {
                return Err(FormatError::ShardDigest {
                    file: s.file.clone(),
                }
                .into());
            }
        }
        Ok(())
    }

    pub fn target_grid(&self) -> Result<DoiGrid, CliError> {
        self.manifest
            .config
            .target_grid()
            .map_err(|e| CliError::Config(format!("dataset.target_cells: {e}")))
    }
}

impl SamplePair {
    /// Stored readings widened to f64, in their stored unit.
    pub fn measurement_matrix(&self) -> Result<MeasurementMatrix, CliError> {
        MeasurementMatrix::new(self.measurement.mapv(f64::from), self.unit)
            .map_err(|e| CliError::Failed(format!("sample {}: {e}", self.id)))
    }

    pub fn linear_matrix(&self) -> Result<MeasurementMatrix, CliError> {
        Ok(self.measurement_matrix()?.to_unit(PowerUnit::LinearPower))
    }

    pub fn ground_truth(&self, grid: DoiGrid) -> Result<GroundTruthMask, CliError> {
        if grid.shape() != self.mask.dim() {
            return Err(CliError::Failed(format!(
                "sample {}: mask {:?} does not match grid {:?}",
                self.id,
                self.mask.dim(),
                grid.shape()
            )));
        }
        Ok(GroundTruthMask {
            grid,
            pixels: self.mask.clone(),
        })
    }
}
