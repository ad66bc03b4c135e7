//! Tasks: the four-state chain MDP and the vortex-flow navigation simulator.

mod chain;
mod nav;

pub use chain::{
    chain_step, mixture_cdf, sample_mixture_reward, true_return_quantiles, true_return_std, ChainConfig,
    ChainEnv, CHAIN_STATES,
};
pub use nav::{
    lidar_scan, nav_step, vortex_velocity, LayoutSampler, LidarParams, NavAction, NavConfig,
    NavEnv, NavState, Observation, Obstacle, Pose, RewardWeights, VehicleParams, Vortex,
};

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalKind {
    Success,
    Collision,
    Timeout,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub kind: TerminalKind,
    /// Undiscounted sum of rewards.
    pub episode_return: f64,
    /// Simulated seconds (steps for the chain).
    pub elapsed: f64,
    /// Summed squared control effort; a proxy, not a physical energy.
    pub energy_proxy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvStep {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    /// Set exactly when `done` is.
    pub outcome: Option<EpisodeOutcome>,
}

/// Where a scalar risk context (nearest-obstacle distance) sits in an
/// observation vector: `distance = obs[index] * scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextFeature {
    pub index: usize,
    pub scale: f64,
}

impl ContextFeature {
    pub fn read(&self, observation: &[f64]) -> f64 {
        observation[self.index] * self.scale
    }
}

pub trait Environment {
    fn observation_dim(&self) -> usize;
    fn action_count(&self) -> usize;
    fn context_feature(&self) -> Option<ContextFeature> {
        None
    }
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: usize) -> Result<EnvStep>;
}
