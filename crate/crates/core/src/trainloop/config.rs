use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selector::{SelectionMode, DEFAULT_LOGIT_SCALE};

/// One point of the hyperparameter space plus the optimization schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub tau: f64,
    pub dropout: f64,
    pub alpha_blend: f64,
    pub logit_scale: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub mode: SelectionMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            weight_decay: 1e-2,
            tau: 0.01,
            dropout: 0.1,
            alpha_blend: 1.0,
            logit_scale: DEFAULT_LOGIT_SCALE,
            epochs: 50,
            batch_size: 32,
            mode: SelectionMode::Hard,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::validation(what.to_string()));
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning rate must be finite and >= 0");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight decay must be finite and >= 0");
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return bad("tau must be > 0");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.alpha_blend) {
            return bad("alpha must be in [0, 1]");
        }
        if !(self.logit_scale.is_finite() && self.logit_scale > 0.0) {
            return bad("logit scale must be > 0");
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1");
        }
        Ok(())
    }
}

/// Value lists searched exhaustively by [`super::grid_search`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperGrid {
    pub weight_decay: Vec<f64>,
    pub tau: Vec<f64>,
    pub dropout: Vec<f64>,
    pub alpha_blend: Vec<f64>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        HyperGrid {
            weight_decay: vec![3e-3, 1e-2, 5e-2, 0.1],
            tau: vec![0.001, 0.01, 0.1],
            dropout: vec![0.1, 0.3, 0.5, 0.7],
            alpha_blend: vec![0.1, 0.3, 0.5, 0.7, 1.0],
        }
    }
}

impl HyperGrid {
    /// A grid holding only the values of `config`.
    pub fn single(config: &TrainConfig) -> Self {
        HyperGrid {
            weight_decay: vec![config.weight_decay],
            tau: vec![config.tau],
            dropout: vec![config.dropout],
            alpha_blend: vec![config.alpha_blend],
        }
    }

    pub fn len(&self) -> usize {
        self.weight_decay.len() * self.tau.len() * self.dropout.len() * self.alpha_blend.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every combination, applied on top of `base`. Alpha varies fastest.
    pub fn configs(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::with_capacity(self.len());
        for &weight_decay in &self.weight_decay {
            for &tau in &self.tau {
                for &dropout in &self.dropout {
                    for &alpha_blend in &self.alpha_blend {
                        out.push(TrainConfig {
                            weight_decay,
                            tau,
                            dropout,
                            alpha_blend,
                            ..base.clone()
                        });
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_shape() {
        let g = HyperGrid::default();
        assert_eq!(g.weight_decay, [3e-3, 1e-2, 5e-2, 0.1]);
        assert_eq!(g.tau, [0.001, 0.01, 0.1]);
        assert_eq!(g.dropout, [0.1, 0.3, 0.5, 0.7]);
        assert_eq!(g.alpha_blend, [0.1, 0.3, 0.5, 0.7, 1.0]);
        assert_eq!(g.len(), 240);
        assert_eq!(g.configs(&TrainConfig::default()).len(), 240);
    }

    #[test]
    fn config_validation() {
        TrainConfig::default().validate().unwrap();
        for broken in [
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                tau: 0.0,
                ..Default::default()
            },
            TrainConfig {
                alpha_blend: 1.5,
                ..Default::default()
            },
            TrainConfig {
                learning_rate: -1.0,
                ..Default::default()
            },
        ] {
            assert!(broken.validate().is_err());
        }
    }

    #[test]
    fn toml_partial_override() {
        let c: TrainConfig = toml::from_str("tau = 0.1\nmode = \"soft\"\n").unwrap();
        assert_eq!(c.tau, 0.1);
        assert_eq!(c.mode, SelectionMode::Soft);
        assert_eq!(c.epochs, 50);
        assert!(toml::from_str::<TrainConfig>("bogus = 1").is_err());
    }
}
