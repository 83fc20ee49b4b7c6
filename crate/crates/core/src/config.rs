//! Experiment configuration files.
//!
//! A config is a TOML document with the sections `model`, `estimator`
//! (repeated), `calibration`, `harness` and `io`. Unknown keys are rejected.
//!
//! ```toml
//! [model]
//! id = "dispersed"
//! kind = "spiked_population"
//! spikes = [259.72, 17.97, 11.04, 7.88, 4.82]
//!
//! [[estimator]]
//! method = "vacle"
//!
//! [[estimator]]
//! method = "tvacle"
//!
//! [harness]
//! reps = 200
//! seed = 7
//! grid = [{ p = 50, n = 200 }]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::DEFAULT_REPS;
use crate::error::{Error, Result};
use crate::estimators::Sigma2Mode;
use crate::exec::Execution;
use crate::harness::{EstimatorEntry, ExperimentConfig, GridPoint};
use crate::spectra::ModelSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub id: String,
    #[serde(flatten)]
    pub spec: ModelSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSection {
    #[serde(default = "default_calibration_reps")]
    pub reps: usize,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self { reps: DEFAULT_REPS }
    }
}

fn default_calibration_reps() -> usize {
    DEFAULT_REPS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessSection {
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
    pub grid: Vec<GridPoint>,
    #[serde(default)]
    pub sigma2: Sigma2Mode,
    #[serde(default)]
    pub execution: Execution,
    #[serde(default)]
    pub trace: bool,
    #[serde(default)]
    pub timing: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoSection {
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub model: ModelSection,
    #[serde(rename = "estimator")]
    pub estimators: Vec<EstimatorEntry>,
    #[serde(default)]
    pub calibration: CalibrationSection,
    pub harness: HarnessSection,
    #[serde(default)]
    pub io: IoSection,
}

impl CliConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: CliConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            model_id: self.model.id.clone(),
            model: self.model.spec.clone(),
            grid: self.harness.grid.clone(),
            estimators: self.estimators.clone(),
            reps: self.harness.reps,
            seed: self.harness.seed,
            sigma2: self.harness.sigma2,
            calibration_reps: self.calibration.reps,
            execution: self.harness.execution,
            keep_traces: self.harness.trace,
            timing: self.harness.timing,
        }
    }
}
