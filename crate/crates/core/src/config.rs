//! Experiment configuration file: a versioned TOML document with a `[scene]`
//! section and optional `[train]` and `[sweep]` sections. Unknown keys are
//! errors, reported with their full key path.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rvmap::{DetectionOptions, MapWindow};
use crate::risopt::TrainParams;
use crate::scene::SceneConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub scene: SceneConfig,
    #[serde(default)]
    pub train: TrainParams,
    #[serde(default)]
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Blend weights of the beta sweep.
    pub betas: Vec<f64>,
    /// Seeds per beta / per spacing: `rng_seed, rng_seed + 1, ...`.
    pub n_seeds: usize,
    /// Blend weight used by the INR and spacing sweeps.
    pub beta: f64,
    pub inr_db: Vec<f64>,
    pub inr_trials: usize,
    /// Target-interferer separations of the spacing sweep; the interferer
    /// stays at the scene angle and the target moves toward broadside.
    pub spacing_deg: Vec<f64>,
    /// An angle pair counts as resolved when both estimates are within this.
    pub resolve_tolerance_deg: f64,
    pub window: MapWindow,
    pub detection: DetectionOptions,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            betas: vec![0.0, 0.2, 0.5, 0.8, 1.0],
            n_seeds: 10,
            beta: 0.8,
            inr_db: (0..=10).map(|k| 5.0 * k as f64).collect(),
            inr_trials: 40,
            spacing_deg: vec![10.0, 5.0, 2.0],
            resolve_tolerance_deg: 0.1,
            window: MapWindow::None,
            detection: DetectionOptions::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(b) = self.betas.iter().chain([&self.beta]).find(|b| !(0.0..=1.0).contains(*b)) {
            return Err(Error::Config(format!("sweep beta {b} outside [0, 1]")));
        }
        if self.n_seeds == 0 || self.inr_trials == 0 {
            return Err(Error::Config("sweep.n_seeds and sweep.inr_trials must be positive".into()));
        }
        if self.inr_db.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sweep.inr_db must be finite".into()));
        }
        if self.spacing_deg.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("sweep.spacing_deg entries must be positive".into()));
        }
        if !(self.resolve_tolerance_deg > 0.0) {
            return Err(Error::Config("sweep.resolve_tolerance_deg must be positive".into()));
        }
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn new(scene: SceneConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            scene,
            train: TrainParams::default(),
            sweep: SweepConfig::default(),
        }
    }

    /// Parses and validates a TOML document.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Config(e.to_string()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("at `{path}`: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.scene.validate()?;
        self.train.validate()?;
        self.sweep.validate()
    }
}
