//! Experiment configuration: a single TOML file covering the model, the
//! domain box, the loss weight, datasets, the trainer, sweep grids, and
//! the distance-oracle schedule. Parsing and serialization round-trip.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contact::{DomainBounds, ModelParams};
use crate::error::{Error, Result};
use crate::experiments::{InitSpec, NoiseConfig, TrainConfig};
use crate::graph::{epsilon_select, GridConfig};
use crate::losses::Epsilon;

/// Loss weight: a number, or `"auto"` to derive it from the mass via the
/// quadratic-growth analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsilonSpec {
    Value(f64),
    Named(String),
}

impl Default for EpsilonSpec {
    fn default() -> Self {
        EpsilonSpec::Named("auto".to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub m: f64,
    pub dt: f64,
    pub a_grav: f64,
    pub theta_true: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let p = ModelParams::default();
        ModelSection { m: p.m, dt: p.dt, a_grav: p.a_grav, theta_true: p.theta }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainSection {
    pub phi_max: f64,
    pub v_max: f64,
    pub b_theta: f64,
}

impl Default for DomainSection {
    fn default() -> Self {
        DomainSection { phi_max: 8.0, v_max: 15.0, b_theta: 8.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub n: usize,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub contact_bias: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection { n: 1000, sigma_x: 0.01, sigma_y: 0.01, contact_bias: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerSection {
    pub step_size: f64,
    pub iterations: usize,
    pub init: InitSpec,
    pub fd_step: f64,
}

impl Default for TrainerSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainerSection {
            step_size: t.step_size,
            iterations: t.iterations,
            init: t.init,
            fd_step: t.fd_step,
        }
    }
}

/// An inclusive linear grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

impl LinearGrid {
    pub fn values(&self) -> Result<Vec<f64>> {
        if self.points < 2 || self.hi.is_nan() || self.lo.is_nan() || self.hi <= self.lo {
            return Err(Error::Config(format!(
                "grid needs hi > lo and at least 2 points, got [{}, {}] x {}",
                self.lo, self.hi, self.points
            )));
        }
        let step = (self.hi - self.lo) / (self.points - 1) as f64;
        Ok((0..self.points).map(|i| self.lo + step * i as f64).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepsSection {
    /// Landscape grid of theta, relative to `theta_true`.
    pub theta_grid: LinearGrid,
    /// Sample sizes for the bound-vs-n curve (log-spaced powers of 10).
    pub n_grid_log10: LinearGrid,
    /// Failure probabilities for the bound-vs-delta curve.
    pub delta_grid: LinearGrid,
}

impl Default for SweepsSection {
    fn default() -> Self {
        SweepsSection {
            theta_grid: LinearGrid { lo: -1.0, hi: 1.0, points: 201 },
            n_grid_log10: LinearGrid { lo: 1.0, hi: 8.0, points: 29 },
            delta_grid: LinearGrid { lo: 0.01, hi: 0.99, points: 50 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QgSection {
    pub samples: u64,
}

impl Default for QgSection {
    fn default() -> Self {
        QgSection { samples: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingRunsSection {
    /// Seeds of the training replicates in the report.
    pub seeds: Vec<u64>,
    /// Dataset sizes trained per seed.
    pub n_values: Vec<usize>,
}

impl Default for TrainingRunsSection {
    fn default() -> Self {
        TrainingRunsSection { seeds: (0..5).collect(), n_values: vec![100, 1000] }
    }
}

/// Full experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Output directory; overridden by `--out` and `IMPLICIT_BOUNDS_OUT`.
    pub output_dir: Option<String>,
    pub epsilon: EpsilonSpec,
    pub model: ModelSection,
    pub domain: DomainSection,
    pub dataset: DatasetSection,
    pub trainer: TrainerSection,
    pub sweeps: SweepsSection,
    pub qg: QgSection,
    pub training_runs: TrainingRunsSection,
    pub oracle: GridConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        ExperimentConfig::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Short hash of the canonical serialized form, recorded in every CSV.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml().as_bytes());
        let digest = hasher.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.params().map_err(|e| Error::Config(e.to_string()))?;
        self.bounds().map_err(|e| Error::Config(e.to_string()))?;
        self.epsilon().map_err(|e| Error::Config(e.to_string()))?;
        self.oracle.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.dataset.contact_bias) {
            return Err(Error::Config(format!(
                "dataset.contact_bias must be in [0, 1], got {}",
                self.dataset.contact_bias
            )));
        }
        Ok(())
    }

    pub fn params(&self) -> Result<ModelParams> {
        ModelParams::new(self.model.m, self.model.dt, self.model.a_grav, self.model.theta_true)
    }

    pub fn bounds(&self) -> Result<DomainBounds> {
        DomainBounds::from_params(
            &self.params()?,
            self.domain.phi_max,
            self.domain.v_max,
            self.domain.b_theta,
        )
    }

    /// The loss weight, resolving `"auto"` through the mass before any
    /// computation runs.
    pub fn epsilon(&self) -> Result<Epsilon> {
        match &self.epsilon {
            EpsilonSpec::Value(v) => Epsilon::new(*v),
            EpsilonSpec::Named(name) if name == "auto" => Ok(epsilon_select(&self.params()?)),
            EpsilonSpec::Named(other) => {
                Err(Error::Config(format!("epsilon must be a number or \"auto\", got \"{other}\"")))
            }
        }
    }

    pub fn noise(&self) -> NoiseConfig {
        NoiseConfig { sigma_x: self.dataset.sigma_x, sigma_y: self.dataset.sigma_y, seed: self.seed }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            step_size: self.trainer.step_size,
            iterations: self.trainer.iterations,
            init: self.trainer.init.clone(),
            fd_step: self.trainer.fd_step,
            seed,
        }
    }
}
