use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdn::{MdnVariant, DEFAULT_COMPONENTS};
use crate::metrics::DEFAULT_GRID_SIZE;
use crate::numerics::AdamConfig;
use crate::scsa::{DEFAULT_CLUSTER_SIZE, DEFAULT_W1};
use crate::soft_filter::DEFAULT_THRESHOLD;

pub const NUM_FOLDS: usize = 5;

/// Everything that shapes a training run. Missing JSON fields take the
/// defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub heads: usize,
    /// Layer norm in front of cluster attention.
    pub layer_norm: bool,
    pub cluster_size: usize,
    pub threshold: f64,
    pub w1: f64,
    pub components: usize,
    pub variant: MdnVariant,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Evaluation horizon; `None` uses the largest event time of each test fold.
    pub tau: Option<f64>,
    pub grid_size: usize,
    /// Worker threads for independent folds; `None` uses the machine's parallelism.
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            heads: 4,
            layer_norm: true,
            cluster_size: DEFAULT_CLUSTER_SIZE,
            threshold: DEFAULT_THRESHOLD,
            w1: DEFAULT_W1,
            components: DEFAULT_COMPONENTS,
            variant: MdnVariant::Learnable,
            lr: 2e-4,
            weight_decay: 1e-3,
            dropout: 0.1,
            epochs: 20,
            batch_size: 1,
            seed: 0,
            tau: None,
            grid_size: DEFAULT_GRID_SIZE,
            threads: None,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.heads == 0 {
            return fail("heads must be at least 1".into());
        }
        if self.cluster_size == 0 {
            return fail("cluster_size must be at least 1".into());
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return fail(format!("threshold {} outside (0,1)", self.threshold));
        }
        if !(0.0..=1.0).contains(&self.w1) {
            return fail(format!("w1 {} outside [0,1]", self.w1));
        }
        if self.components == 0 {
            return fail("components must be at least 1".into());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail("lr and weight_decay must be finite and nonnegative".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0,1)", self.dropout));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if let Some(tau) = self.tau {
            if !(tau > 0.0 && tau.is_finite()) {
                return fail(format!("tau {tau} must be positive"));
            }
        }
        if self.grid_size < 2 {
            return fail("grid_size must be at least 2".into());
        }
        if self.threads == Some(0) {
            return fail("threads must be at least 1".into());
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }

    pub fn worker_threads(&self) -> usize {
        self.threads
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_reference_hyperparameters() {
        let c = RunConfig::default();
        assert_eq!(c.cluster_size, 64);
        assert_eq!(c.threshold, 0.5);
        assert_eq!(c.components, 100);
        assert_eq!(c.lr, 2e-4);
        assert_eq!(c.weight_decay, 1e-3);
        assert_eq!(c.dropout, 0.1);
        assert_eq!(c.batch_size, 1);
        assert_eq!(c.epochs, 20);
        assert_eq!(c.w1, 0.8);
        c.validate().unwrap();
    }

    #[test]
    fn partial_json_fills_defaults() {
        let c = RunConfig::from_json(r#"{"epochs": 3, "variant": "fixed"}"#).unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.variant, MdnVariant::Fixed);
        assert_eq!(c.heads, 4);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_json(r#"{"w1": 1.5}"#).is_err());
        assert!(RunConfig::from_json(r#"{"dropout": 1.0}"#).is_err());
        assert!(RunConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(RunConfig::from_json(r#"{"variant": "other"}"#).is_err());
    }

    #[test]
    fn json_round_trip() {
        let c = RunConfig {
            tau: Some(3.5),
            lr: 1.234567890123e-4,
            ..RunConfig::default()
        };
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
