//! Run configuration: one TOML document with five sections, every field
//! defaulted so that an empty document is the full-scale setup.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use wisp_core::em::{NodeLayout, NoiseSpec, PowerUnit, SolverConfig};
use wisp_core::physbase::{Segmentation, Threshold, LAMBDA_FACTORS};
use wisp_core::scene::ShapeConfig;
use wisp_core::DoiGrid;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConfig {
    pub frequency_hz: f64,
    /// DoI size `[x, y]` in meters.
    pub extent_m: [f64; 2],
    pub nodes: usize,
    pub solver: SolverConfig,
    /// Additive dB-domain noise; absent means noiseless.
    pub snr_db: Option<f64>,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            frequency_hz: 2.4e9,
            extent_m: [3.0, 3.0],
            nodes: 20,
            solver: SolverConfig::default(),
            snr_db: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// Samples per shape family.
    pub per_family: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Records per shard file.
    pub shard_size: usize,
    /// Side of the square target masks.
    pub target_cells: usize,
    /// Unit of the stored measurement matrices.
    pub unit: PowerUnit,
    pub train_ratio: f64,
    /// Largest tolerated fraction of samples needing a re-draw after a
    /// solver failure.
    pub failure_budget: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            per_family: 20_000,
            seed: 0,
            output_dir: PathBuf::from("dataset"),
            shard_size: 1000,
            target_cells: 256,
            unit: PowerUnit::Db,
            train_ratio: 0.8,
            failure_budget: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    /// Candidate ridge weights as multiples of `||A^T A||`.
    pub lambda_factors: Vec<f64>,
    /// Fixed ridge weight factor; skips the search when set.
    pub lambda_factor: Option<f64>,
    /// Training samples used for the lambda search (0 = all).
    pub tuning_samples: usize,
    pub segmentation: Segmentation,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            lambda_factors: LAMBDA_FACTORS.to_vec(),
            lambda_factor: None,
            tuning_samples: 200,
            segmentation: Segmentation::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Eval,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Split the baseline is scored on.
    pub split: SplitName,
    /// Method tags written by `invert`.
    pub methods: Vec<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            split: SplitName::Eval,
            methods: vec!["physical-60".into(), "physical-256".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub physics: PhysicsConfig,
    pub scene: ShapeConfig,
    pub dataset: DatasetConfig,
    pub baseline: BaselineConfig,
    pub eval: EvalConfig,
}

/// Built-in starting points for `--preset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// 4 x 20000 samples at 15 cells per wavelength.
    Full,
    /// 4 x 50 samples at 8 cells per wavelength.
    Desk,
}

impl RunConfig {
    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Full => Self::default(),
            Preset::Desk => {
                let mut c = Self::default();
                c.dataset.per_family = 50;
                c.dataset.shard_size = 50;
                c.dataset.output_dir = PathBuf::from("dataset-desk");
                c.physics.solver.cells_per_wavelength = 8.0;
                c.baseline.tuning_samples = 0;
                c
            }
        }
    }

    /// Parses and validates a TOML document. Missing fields take their
    /// defaults; unknown keys are rejected with their location.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        Self::parse_over(text, Self::default())
    }

    /// Like [`RunConfig::parse`], but fields missing from `text` come from
    /// `base`.
    pub fn parse_over(text: &str, base: Self) -> Result<Self, CliError> {
        let overlay: toml::Table =
            toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        let mut merged =
            toml::Table::try_from(&base).map_err(|e| CliError::Config(format!("config: {e}")))?;
        merge(&mut merged, overlay);
        // Re-render so the typed parse reports locations in one document.
        let doc = toml::to_string(&merged).map_err(|e| CliError::Config(format!("config: {e}")))?;
        let cfg: Self = toml::from_str(&doc).map_err(|e| {
            // The typed error from the merged document has the right key
            // path; re-parse the user text for a matching line if possible.
            match toml::from_str::<Self>(text) {
                Err(user) => CliError::Config(format!("config: {user}")),
                Ok(_) => CliError::Config(format!("config: {e}")),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn render(&self) -> String {
        toml::to_string_pretty(self).expect("configuration is serializable")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |key: &str, msg: String| Err(CliError::Config(format!("{key}: {msg}")));
        let p = &self.physics;
        if !(p.frequency_hz > 0.0 && p.frequency_hz.is_finite()) {
            return bad(
                "physics.frequency_hz",
                format!("{} must be positive", p.frequency_hz),
            );
        }
        if !p.extent_m.iter().all(|e| *e > 0.0 && e.is_finite()) {
            return bad(
                "physics.extent_m",
                format!("{:?} must be positive", p.extent_m),
            );
        }
        if p.nodes < 3 {
            return bad("physics.nodes", format!("{} must be at least 3", p.nodes));
        }
        if let Err(e) = p.solver.validate() {
            return bad("physics.solver", e.to_string());
        }
        if let Some(snr) = p.snr_db {
            if !(snr >= 0.0 && snr.is_finite()) {
                return bad("physics.snr_db", format!("{snr} must be non-negative"));
            }
        }
        let target = self
            .target_grid()
            .map_err(|e| CliError::Config(format!("dataset.target_cells: {e}")))?;
        if let Err(e) = self.scene.validate(&target) {
            return bad("scene", e.to_string());
        }
        let d = &self.dataset;
        if d.per_family == 0 {
            return bad("dataset.per_family", "must be positive".into());
        }
        if d.shard_size == 0 {
            return bad("dataset.shard_size", "must be positive".into());
        }
        if !(d.train_ratio > 0.0 && d.train_ratio < 1.0) {
            return bad(
                "dataset.train_ratio",
                format!("{} must lie in (0, 1)", d.train_ratio),
            );
        }
        if d.per_family < 2 {
            return bad(
                "dataset.per_family",
                "a train/eval split needs at least 2 per family".into(),
            );
        }
        if !(0.0..=1.0).contains(&d.failure_budget) {
            return bad(
                "dataset.failure_budget",
                format!("{} must lie in [0, 1]", d.failure_budget),
            );
        }
        if d.target_cells > u16::MAX as usize {
            return bad(
                "dataset.target_cells",
                format!("{} exceeds 65535", d.target_cells),
            );
        }
        let b = &self.baseline;
        if b.lambda_factors.is_empty()
            || b.lambda_factors
                .iter()
                .any(|f| !(*f > 0.0 && f.is_finite()))
        {
            return bad(
                "baseline.lambda_factors",
                format!("{:?} must be positive", b.lambda_factors),
            );
        }
        if let Some(f) = b.lambda_factor {
            if !(f > 0.0 && f.is_finite()) {
                return bad("baseline.lambda_factor", format!("{f} must be positive"));
            }
        }
        if let Err(e) = b.segmentation.validate() {
            return bad("baseline.segmentation", e.to_string());
        }
        if let Threshold::Fixed { tau } = b.segmentation.threshold {
            if !tau.is_finite() {
                return bad("baseline.segmentation.threshold.tau", format!("{tau}"));
            }
        }
        for m in &self.eval.methods {
            if !matches!(m.as_str(), "physical-60" | "physical-256") {
                return bad("eval.methods", format!("unknown baseline method {m:?}"));
            }
        }
        Ok(())
    }

    pub fn layout(&self) -> Result<NodeLayout, CliError> {
        let [ex, ey] = self.physics.extent_m;
        NodeLayout::perimeter(ex, ey, self.physics.nodes, self.physics.frequency_hz)
            .map_err(|e| CliError::Config(format!("physics: {e}")))
    }

    pub fn target_grid(&self) -> Result<DoiGrid, wisp_core::GridError> {
        let [ex, ey] = self.physics.extent_m;
        DoiGrid::new(ex, ey, self.dataset.target_cells, self.dataset.target_cells)
    }

    /// Noise for sample `seed`, if configured.
    pub fn noise(&self, seed: u64) -> Option<NoiseSpec> {
        self.physics.snr_db.map(|snr_db| NoiseSpec { snr_db, seed })
    }

    /// Hex SHA-256 over the physics that determines a measurement matrix:
    /// frequency, DoI, node positions and solver settings.
    pub fn physics_digest(&self) -> Result<String, CliError> {
        #[derive(Serialize)]
        struct Material<'a> {
            frequency_hz: f64,
            extent_m: [f64; 2],
            nodes: &'a [[f64; 2]],
            solver: &'a SolverConfig,
            snr_db: Option<f64>,
        }
        let layout = self.layout()?;
        let m = Material {
            frequency_hz: self.physics.frequency_hz,
            extent_m: self.physics.extent_m,
            nodes: layout.positions(),
            solver: &self.physics.solver,
            snr_db: self.physics.snr_db,
        };
        let bytes = serde_json::to_vec(&m).expect("digest material serializes");
        Ok(hex(&Sha256::digest(bytes)))
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn merge(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
