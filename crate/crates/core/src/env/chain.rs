use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use super::{EnvStep, Environment, EpisodeOutcome, TerminalKind};
use crate::error::{Error, Result};

pub const CHAIN_STATES: usize = 4;
const TERMINAL: usize = CHAIN_STATES - 1;

/// Deterministic chain `0 → 1 → 2 → 3` under a single action. The transition
/// into state 3 pays a draw from a two-component Gaussian mixture.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    pub gamma: f64,
    pub mixture_means: [f64; 2],
    pub mixture_std: f64,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            mixture_means: [-2.0, 2.0],
            mixture_std: 1.0,
            seed: 0,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("chain gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if !(self.mixture_std > 0.0) {
            return Err(Error::Config("mixture std must be positive".into()));
        }
        Ok(())
    }

    pub fn mixture_mean(&self) -> f64 {
        0.5 * (self.mixture_means[0] + self.mixture_means[1])
    }

    pub fn mixture_variance(&self) -> f64 {
        let mu = self.mixture_mean();
        let s2 = self.mixture_std * self.mixture_std;
        self.mixture_means
            .iter()
            .map(|m| 0.5 * (s2 + (m - mu) * (m - mu)))
            .sum()
    }
}

pub fn sample_mixture_reward(cfg: &ChainConfig, rng: &mut impl Rng) -> f64 {
    let mean = if rng.random::<bool>() {
        cfg.mixture_means[1]
    } else {
        cfg.mixture_means[0]
    };
    Normal::new(mean, cfg.mixture_std)
        .expect("validated std")
        .sample(rng)
}

/// One chain transition: `(next_state, reward, done)`.
pub fn chain_step(cfg: &ChainConfig, state: usize, rng: &mut impl Rng) -> Result<(usize, f64, bool)> {
    match state {
        0 | 1 => Ok((state + 1, 0.0, false)),
        2 => Ok((TERMINAL, sample_mixture_reward(cfg, rng), true)),
        s => Err(Error::InvalidState(s)),
    }
}

pub fn mixture_cdf(cfg: &ChainConfig, x: f64) -> f64 {
    cfg.mixture_means
        .iter()
        .map(|&m| {
            0.5 * StatNormal::new(m, cfg.mixture_std)
                .expect("validated std")
                .cdf(x)
        })
        .sum()
}

fn mixture_quantile(cfg: &ChainConfig, tau: f64) -> f64 {
    let span = cfg.mixture_means[0].abs().max(cfg.mixture_means[1].abs()) + 40.0 * cfg.mixture_std;
    let (mut lo, mut hi) = (-span, span);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mixture_cdf(cfg, mid) < tau {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Exact return quantiles from a non-terminal state: the reward quantile
/// scaled by `γ^(2 − state)`.
pub fn true_return_quantiles(cfg: &ChainConfig, state: usize, taus: &[f64]) -> Result<Vec<f64>> {
    if state >= TERMINAL {
        return Err(Error::InvalidState(state));
    }
    let discount = cfg.gamma.powi((2 - state) as i32);
    taus.iter()
        .map(|&tau| {
            if tau > 0.0 && tau < 1.0 {
                Ok(discount * mixture_quantile(cfg, tau))
            } else {
                Err(Error::Domain(format!("fraction {tau} outside (0, 1)")))
            }
        })
        .collect()
}

/// Analytic return standard deviation from a non-terminal state.
pub fn true_return_std(cfg: &ChainConfig, state: usize) -> Result<f64> {
    if state >= TERMINAL {
        return Err(Error::InvalidState(state));
    }
    Ok(cfg.gamma.powi((2 - state) as i32) * cfg.mixture_variance().sqrt())
}

/// Chain MDP with one-hot observations.
#[derive(Clone, Debug)]
pub struct ChainEnv {
    cfg: ChainConfig,
    state: usize,
    rng: ChaCha8Rng,
    steps: usize,
}

impl ChainEnv {
    pub fn new(cfg: ChainConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            state: 0,
            steps: 0,
        })
    }

    pub fn config(&self) -> &ChainConfig {
        &self.cfg
    }

    pub fn state(&self) -> usize {
        self.state
    }

    pub fn one_hot(state: usize) -> Vec<f64> {
        let mut v = vec![0.0; CHAIN_STATES];
        v[state.min(TERMINAL)] = 1.0;
        v
    }
}

impl Environment for ChainEnv {
    fn observation_dim(&self) -> usize {
        CHAIN_STATES
    }

    fn action_count(&self) -> usize {
        1
    }

    fn reset(&mut self) -> Vec<f64> {
        self.state = 0;
        self.steps = 0;
        Self::one_hot(0)
    }

    fn step(&mut self, action: usize) -> Result<EnvStep> {
        if action != 0 {
            return Err(Error::InvalidAction { action, count: 1 });
        }
        let (next, reward, done) = chain_step(&self.cfg, self.state, &mut self.rng)?;
        self.state = next;
        self.steps += 1;
        let outcome = done.then(|| EpisodeOutcome {
            kind: TerminalKind::Success,
            episode_return: reward,
            elapsed: self.steps as f64,
            energy_proxy: 0.0,
        });
        Ok(EnvStep {
            observation: Self::one_hot(next),
            reward,
            done,
            outcome,
        })
    }
}
