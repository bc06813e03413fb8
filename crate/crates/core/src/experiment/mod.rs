//! Sweeps of campaigns driven by a JSON configuration, with one output
//! directory per (function, surrogate, seed, network variant) cell.
//!
//! A configuration names the axes of the sweep:
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "functions": ["discontinuous-1", "nonstationary-2"],
//!   "surrogates": ["fbnn", "gp"],
//!   "seeds": [0, 1, 2],
//!   "steps": 40,
//!   "fbnn": { "architectures": [[32, 16, 8]], "noise_priors": ["half-normal-1"] },
//!   "nuts": { "warmup": 500, "samples": 500 }
//! }
//! ```
//!
//! Every optional field has a default; unknown fields are rejected.

mod persist;
mod presets;
pub mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::active::{CampaignConfig, SurrogateConfig};
use crate::bnn::{BnnConfig, NoisePrior, DEFAULT_HIDDEN};
use crate::gp::{GpConfig, GpInference};
use crate::sampler::NutsConfig;
use crate::testbed::{self, IsingConfig, Latency, TestFunctionSpec};
use crate::{Error, Result};

pub use persist::{
    execute, run_cell, CellOutcome, CellStatus, Diagnostics, InitialPoint, Manifest, SweepOutcome, FINAL_FILE,
    MANIFEST_FILE, PROGRESS_FILE, STEPS_FILE,
};
pub use presets::{preset, PresetOverrides, PRESETS};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable that moves the default output root.
pub const OUTPUT_ROOT_ENV: &str = "ACTIVEBAYES_OUTPUT_ROOT";
pub const DEFAULT_OUTPUT_ROOT: &str = "activebayes-runs";

/// Output root from the environment, or the default relative directory.
pub fn default_output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SurrogateKind {
    #[serde(rename = "fbnn")]
    Fbnn,
    #[serde(rename = "gp")]
    Gp,
    #[serde(rename = "gp-map")]
    GpMap,
}

impl SurrogateKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SurrogateKind::Fbnn => "fbnn",
            SurrogateKind::Gp => "gp",
            SurrogateKind::GpMap => "gp-map",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FbnnAxes {
    pub architectures: Vec<Vec<usize>>,
    pub noise_priors: Vec<NoisePrior>,
}

impl Default for FbnnAxes {
    fn default() -> Self {
        FbnnAxes {
            architectures: vec![DEFAULT_HIDDEN.to_vec()],
            noise_priors: vec![NoisePrior::default()],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GpSettings {
    pub noise_prior: NoisePrior,
}

/// Simulation settings applied to the Ising benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IsingSettings {
    pub lattice: usize,
    pub warmup_sweeps: usize,
    pub measurement_sweeps: usize,
}

impl Default for IsingSettings {
    fn default() -> Self {
        let d = IsingConfig::new(testbed::Observable::Magnetization);
        IsingSettings {
            lattice: d.lattice,
            warmup_sweeps: d.warmup_sweeps,
            measurement_sweeps: d.measurement_sweeps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub functions: Vec<String>,
    pub surrogates: Vec<SurrogateKind>,
    pub seeds: Vec<u64>,
    /// Acquisitions per campaign; defaults depend on the benchmark.
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub fbnn: FbnnAxes,
    #[serde(default)]
    pub gp: GpSettings,
    #[serde(default)]
    pub nuts: NutsConfig,
    #[serde(default)]
    pub ising: Option<IsingSettings>,
    /// Grid resolution per function name.
    #[serde(default)]
    pub resolution: BTreeMap<String, Vec<usize>>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub allow_remeasure: bool,
    /// Write wall-clock fit times into steps.csv (which then differs between
    /// otherwise identical runs). Manifests always record them.
    #[serde(default)]
    pub record_timings: bool,
}

/// Step budget used when the configuration does not set one.
pub fn default_steps(spec: &TestFunctionSpec) -> usize {
    match (spec.dim(), spec.latency) {
        (1, _) => 40,
        (_, Latency::Simulated) => 150,
        _ => 200,
    }
}

/// Everything needed to reproduce one campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResolvedCell {
    pub function: String,
    pub surrogate: SurrogateKind,
    pub seed: u64,
    pub steps: usize,
    pub resolution: Vec<usize>,
    /// Hidden widths, networks only.
    pub hidden: Option<Vec<usize>>,
    pub noise_prior: NoisePrior,
    pub nuts: NutsConfig,
    pub ising: Option<IsingSettings>,
    pub allow_remeasure: bool,
    pub record_timings: bool,
}

impl ResolvedCell {
    pub fn test_function(&self) -> Result<TestFunctionSpec> {
        let base = testbed::lookup(&self.function)?;
        let mut spec = if base.resolution == self.resolution {
            base
        } else {
            base.with_resolution(&self.resolution)?
        };
        if let (Some(cfg), Some(s)) = (spec.ising_config().copied(), self.ising) {
            spec = spec.with_ising_config(IsingConfig {
                lattice: s.lattice,
                warmup_sweeps: s.warmup_sweeps,
                measurement_sweeps: s.measurement_sweeps,
                ..cfg
            })?;
        }
        Ok(spec)
    }

    pub fn campaign(&self) -> CampaignConfig {
        let surrogate = match self.surrogate {
            SurrogateKind::Fbnn => SurrogateConfig::Fbnn(BnnConfig {
                hidden: self.hidden.clone().unwrap_or_else(|| DEFAULT_HIDDEN.to_vec()),
                noise_prior: self.noise_prior,
                nuts: self.nuts,
            }),
            SurrogateKind::Gp | SurrogateKind::GpMap => SurrogateConfig::Gp(GpConfig {
                inference: if self.surrogate == SurrogateKind::Gp {
                    GpInference::Nuts
                } else {
                    GpInference::Map
                },
                noise_prior: self.noise_prior,
                nuts: self.nuts,
            }),
        };
        CampaignConfig {
            steps: self.steps,
            surrogate,
            allow_remeasure: self.allow_remeasure,
        }
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("cells serialize");
        Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Surrogate with its network variant, e.g. `fbnn:32-16-8:half-normal-1`.
    pub fn label(&self) -> String {
        match (&self.surrogate, &self.hidden) {
            (SurrogateKind::Fbnn, Some(h)) => format!("fbnn:{}:{}", architecture_name(h), self.noise_prior),
            (kind, _) => kind.as_str().to_string(),
        }
    }

    /// Directory name: readable prefix plus the first 12 hex digits of the
    /// content hash.
    pub fn dir_name(&self) -> String {
        format!(
            "{}-{}-s{}-{}",
            self.function,
            self.surrogate.as_str(),
            self.seed,
            &self.content_hash()[..12]
        )
    }
}

pub fn architecture_name(hidden: &[usize]) -> String {
    if hidden.is_empty() {
        return "linear".into();
    }
    hidden.iter().map(|w| w.to_string()).collect::<Vec<_>>().join("-")
}

/// Cells of a sweep and where they are written.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub output_dir: PathBuf,
    pub cells: Vec<ResolvedCell>,
}

impl Plan {
    /// One line per cell: directory name and label.
    pub fn describe(&self) -> String {
        let mut out = format!("{} cells -> {}\n", self.cells.len(), self.output_dir.display());
        for c in &self.cells {
            out.push_str(&format!("{}  {} {} seed={} steps={}\n", c.dir_name(), c.function, c.label(), c.seed, c.steps));
        }
        out
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema {
                path: "schema_version".into(),
                message: format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            });
        }
        let non_empty = [
            ("functions", self.functions.is_empty()),
            ("surrogates", self.surrogates.is_empty()),
            ("seeds", self.seeds.is_empty()),
            ("fbnn.architectures", self.fbnn.architectures.is_empty()),
            ("fbnn.noise_priors", self.fbnn.noise_priors.is_empty()),
        ];
        if let Some((path, _)) = non_empty.iter().find(|(_, empty)| *empty) {
            return Err(Error::Schema {
                path: path.to_string(),
                message: "must not be empty".into(),
            });
        }
        for name in &self.functions {
            testbed::lookup(name)?;
        }
        for (name, res) in &self.resolution {
            testbed::lookup(name)?.with_resolution(res).map_err(|e| Error::Schema {
                path: format!("resolution.{name}"),
                message: e.to_string(),
            })?;
        }
        if self.steps == Some(0) {
            return Err(Error::Schema {
                path: "steps".into(),
                message: "must be at least 1".into(),
            });
        }
        if let Some(arch) = self.fbnn.architectures.iter().find(|a| a.contains(&0)) {
            return Err(Error::Schema {
                path: "fbnn.architectures".into(),
                message: format!("zero-width layer in {arch:?}"),
            });
        }
        self.nuts.validate().map_err(|e| Error::Schema {
            path: "nuts".into(),
            message: e.to_string(),
        })?;
        if let Some(s) = self.ising {
            let cfg = IsingConfig {
                lattice: s.lattice,
                warmup_sweeps: s.warmup_sweeps,
                measurement_sweeps: s.measurement_sweeps,
                ..IsingConfig::new(testbed::Observable::Magnetization)
            };
            cfg.validate().map_err(|e| Error::Schema {
                path: "ising".into(),
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// The cells of the sweep in a fixed order: function, surrogate, network
    /// variant, seed.
    pub fn expand(&self) -> Result<Vec<ResolvedCell>> {
        self.validate()?;
        let mut cells = Vec::new();
        for name in &self.functions {
            let base = testbed::lookup(name)?;
            let resolution = self.resolution.get(name).cloned().unwrap_or_else(|| base.resolution.clone());
            let spec = base.with_resolution(&resolution)?;
            let steps = self.steps.unwrap_or_else(|| default_steps(&spec));
            let ising = spec.ising_config().map(|_| self.ising.unwrap_or_default());
            for &surrogate in &self.surrogates {
                let variants: Vec<(Option<Vec<usize>>, NoisePrior)> = match surrogate {
                    SurrogateKind::Fbnn => self
                        .fbnn
                        .architectures
                        .iter()
                        .flat_map(|a| self.fbnn.noise_priors.iter().map(move |p| (Some(a.clone()), *p)))
                        .collect(),
                    _ => vec![(None, self.gp.noise_prior)],
                };
                for (hidden, noise_prior) in variants {
                    for &seed in &self.seeds {
                        cells.push(ResolvedCell {
                            function: name.clone(),
                            surrogate,
                            seed,
                            steps,
                            resolution: resolution.clone(),
                            hidden: hidden.clone(),
                            noise_prior,
                            nuts: self.nuts,
                            ising,
                            allow_remeasure: self.allow_remeasure,
                            record_timings: self.record_timings,
                        });
                    }
                }
            }
        }
        Ok(cells)
    }

    pub fn plan(&self) -> Result<Plan> {
        Ok(Plan {
            output_dir: self.output_dir.clone().unwrap_or_else(default_output_root),
            cells: self.expand()?,
        })
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads either a sweep configuration or a run manifest. A manifest yields a
/// one-cell plan writing to the manifest's parent directory, so the run is
/// reproduced next to the original unless `output_dir` is given.
pub fn load_plan(path: &Path, output_dir: Option<&Path>) -> Result<Plan> {
    let text = read(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Schema {
        path: ".".into(),
        message: e.to_string(),
    })?;
    if value.get("cell").is_some() {
        let manifest = Manifest::from_json(&text)?;
        let parent = path.parent().and_then(Path::parent).unwrap_or(Path::new("."));
        return Ok(Plan {
            output_dir: output_dir.map(Path::to_path_buf).unwrap_or_else(|| parent.to_path_buf()),
            cells: vec![manifest.cell],
        });
    }
    let mut plan = ExperimentConfig::from_json(&text)?.plan()?;
    if let Some(dir) = output_dir {
        plan.output_dir = dir.to_path_buf();
    }
    Ok(plan)
}
