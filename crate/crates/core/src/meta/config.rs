use super::adam::AdamConfig;
use super::inner::{GradientOrder, InnerConfig};
use super::model::TrainerKind;
use crate::error::{Error, Result};
use crate::networks::Architecture;
use crate::taskgen::DistConfig;

/// Outer-loop settings.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct MetaConfig {
    pub meta_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub meta_batch: usize,
    pub iterations: u64,
    pub order: GradientOrder,
    pub trainer: TrainerKind,
}

impl Default for MetaConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            meta_lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            meta_batch: 25,
            iterations: 10_000,
            order: GradientOrder::Second,
            trainer: TrainerKind::MuMoMaml,
        }
    }
}

impl MetaConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.meta_lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam().validate()?;
        if self.meta_batch == 0 {
            return Err(Error::Config("meta_batch must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything a run depends on besides the executor.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ExperimentConfig {
    pub distribution: DistConfig,
    pub architecture: Architecture,
    pub inner: InnerConfig,
    pub meta: MetaConfig,
    pub seed: u64,
    /// Evaluation hook period in iterations; 0 disables it.
    pub eval_every: u64,
    /// Held-out tasks per evaluation.
    pub eval_tasks: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            distribution: DistConfig::default(),
            architecture: Architecture::default(),
            inner: InnerConfig::default(),
            meta: MetaConfig::default(),
            seed: 0,
            eval_every: 0,
            eval_tasks: 500,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.distribution.validate()?;
        self.architecture.validate()?;
        self.inner.validate()?;
        self.meta.validate()?;
        if self.eval_tasks == 0 {
            return Err(Error::Config("eval_tasks must be at least 1".into()));
        }
        Ok(())
    }
}
