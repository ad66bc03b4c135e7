use serde::{Deserialize, Serialize};

use crate::autodiff::AdamConfig;
use crate::error::{Error, Result};
use crate::loss::LossConfig;
use crate::robust::{DistortionConfig, RobustConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentKind {
    Dqn,
    Iqn,
    Rqiqn,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Dqn => "dqn",
            AgentKind::Iqn => "iqn",
            AgentKind::Rqiqn => "rqiqn",
        }
    }
}

/// Linear ε-greedy decay from `start` to `end` over `horizon` steps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Exploration {
    pub start: f64,
    pub end: f64,
    pub horizon: u64,
}

impl Default for Exploration {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.05,
            horizon: 50_000,
        }
    }
}

impl Exploration {
    pub fn rate(&self, step: u64) -> f64 {
        if self.horizon == 0 || step >= self.horizon {
            return self.end;
        }
        let frac = step as f64 / self.horizon as f64;
        self.start + (self.end - self.start) * frac
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    /// `N`: current fractions per transition.
    pub current_fractions: usize,
    /// `N'`: target fractions per transition.
    pub target_fractions: usize,
    /// `K`: fractions for greedy action selection.
    pub action_fractions: usize,
    pub gamma: f64,
    pub loss: LossConfig,
    pub robust: RobustConfig,
    pub distortion: DistortionConfig,
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Target network copy period, in environment steps.
    pub sync_period: u64,
    /// Gradient update period, in environment steps.
    pub train_period: u64,
    pub train_start: u64,
    pub exploration: Exploration,
    pub hidden_width: usize,
    pub embedding_dim: usize,
    /// Global gradient-norm clip; off when unset.
    pub grad_clip: Option<f64>,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            current_fractions: 8,
            target_fractions: 8,
            action_fractions: 32,
            gamma: 0.99,
            loss: LossConfig::check(),
            robust: RobustConfig::default(),
            distortion: DistortionConfig::identity(),
            optimizer: AdamConfig::default(),
            batch_size: 64,
            replay_capacity: 50_000,
            sync_period: 1_000,
            train_period: 1,
            train_start: 1_000,
            exploration: Exploration::default(),
            hidden_width: 128,
            embedding_dim: 64,
            grad_clip: None,
            seed: 0,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.current_fractions == 0 || self.target_fractions == 0 || self.action_fractions == 0 {
            return bad("fraction counts N, N', K must be at least 1");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if self.batch_size == 0 || self.replay_capacity == 0 {
            return bad("batch size and replay capacity must be positive");
        }
        if self.sync_period == 0 || self.train_period == 0 {
            return bad("sync and train periods must be positive");
        }
        if self.hidden_width == 0 || self.embedding_dim == 0 {
            return bad("network widths must be positive");
        }
        if !(self.optimizer.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return bad("grad_clip must be positive when set");
            }
        }
        self.loss.validate()?;
        self.robust.validate()?;
        self.distortion.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exploration_decays_linearly() {
        let e = Exploration {
            start: 1.0,
            end: 0.1,
            horizon: 10,
        };
        assert_eq!(e.rate(0), 1.0);
        assert!((e.rate(5) - 0.55).abs() < 1e-12);
        assert_eq!(e.rate(10), 0.1);
        assert_eq!(e.rate(1000), 0.1);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(AgentConfig::default().validate().is_ok());
        let bad = [
            AgentConfig { current_fractions: 0, ..Default::default() },
            AgentConfig { gamma: 1.0, ..Default::default() },
            AgentConfig { sync_period: 0, ..Default::default() },
            AgentConfig { grad_clip: Some(0.0), ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }
}
