use std::path::PathBuf;

use super::{default_output_root, ExperimentConfig, FbnnAxes, GpSettings, SurrogateKind, SCHEMA_VERSION};
use crate::bnn::{NoisePrior, DEFAULT_HIDDEN};
use crate::sampler::NutsConfig;
use crate::{Error, Result};

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 5] = ["fig3", "fig4", "fig5a", "fig5b", "fig6"];

const ONE_D: [&str; 6] = [
    "discontinuous-1",
    "discontinuous-2",
    "discontinuous-3",
    "nonstationary-1",
    "nonstationary-2",
    "nonstationary-3",
];
const TWO_D: [&str; 4] = ["phases2d", "rays2d", "ising2d-magnetization", "ising2d-heatcapacity"];
const SEEDS: [u64; 3] = [0, 1, 2];

/// Command-line adjustments applied on top of a preset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PresetOverrides {
    pub steps: Option<usize>,
    pub warmup: Option<usize>,
    pub samples: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub output_dir: Option<PathBuf>,
}

/// The sweep behind a figure. `fig3` and `fig4` are the same runs, read for
/// MSE and NLPD respectively. Output goes to `<root>/<name>` by default.
pub fn preset(name: &str, overrides: &PresetOverrides) -> Result<ExperimentConfig> {
    let strs = |names: &[&str]| names.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let mut fbnn = FbnnAxes::default();
    let functions = match name {
        "fig3" | "fig4" => strs(&ONE_D),
        "fig5a" => {
            fbnn.architectures = vec![vec![64, 32, 16], DEFAULT_HIDDEN.to_vec(), vec![32, 32]];
            strs(&ONE_D)
        }
        "fig5b" => {
            fbnn.noise_priors = vec![
                NoisePrior::HalfNormal { scale: 1.0 },
                NoisePrior::HalfNormal { scale: 0.1 },
                NoisePrior::LogNormal { mu: 0.0, sigma: 1.0 },
            ];
            strs(&ONE_D)
        }
        "fig6" => strs(&TWO_D),
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown preset {other:?}; expected one of {}",
                PRESETS.join(", ")
            )))
        }
    };
    let mut nuts = NutsConfig::default();
    if let Some(w) = overrides.warmup {
        nuts.warmup = w;
    }
    if let Some(s) = overrides.samples {
        nuts.samples = s;
    }
    let cfg = ExperimentConfig {
        schema_version: SCHEMA_VERSION,
        functions,
        surrogates: vec![SurrogateKind::Fbnn, SurrogateKind::Gp],
        seeds: overrides.seeds.clone().unwrap_or_else(|| SEEDS.to_vec()),
        steps: overrides.steps,
        fbnn,
        gp: GpSettings::default(),
        nuts,
        ising: None,
        resolution: Default::default(),
        output_dir: Some(overrides.output_dir.clone().unwrap_or_else(|| default_output_root().join(name))),
        allow_remeasure: false,
        record_timings: false,
    };
    cfg.validate()?;
    Ok(cfg)
}
