//! Replay-based agents: robust IQN, plain IQN, and a scalar DQN baseline.

mod config;
mod dqn;
mod iqn;
mod network;
mod replay;

pub use config::{AgentConfig, AgentKind, Exploration};
pub use dqn::{dqn_baseline, dqn_loss_and_grads, dqn_targets, greedy_q_action, q_values};
pub use iqn::{
    compute_robust_td_matrix, greedy_actions, rqiqn_loss, rqiqn_loss_and_grads, select_action,
    td_matrices, FractionDraws, TdSpec,
};
pub use network::{stack_rows, Model, QuantileFunction, QuantileNetwork};
pub use replay::{ReplayBuffer, Transition};

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autodiff::{Adam, Mlp, Parameters, Tensor};
use crate::env::ContextFeature;
use crate::error::{Error, Result};

pub const SNAPSHOT_FORMAT: &str = "rqiqn-snapshot";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub online: Model,
    pub target: Model,
    pub optimizer: Adam,
    /// Environment steps seen by `train_step`.
    pub step: u64,
    /// Radius used by the most recent step.
    pub epsilon: f64,
}

/// What one call to [`Agent::train_step`] did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainOutcome {
    pub step: u64,
    pub epsilon: f64,
    /// Set when a gradient step happened.
    pub loss: Option<f64>,
    pub synced: bool,
}

#[derive(Serialize, Deserialize)]
struct SnapshotFile {
    format: String,
    version: u32,
    kind: AgentKind,
    config_hash: String,
    config: AgentConfig,
    snapshot: AgentSnapshot,
}

/// Hex SHA-256 of the config's canonical JSON form.
pub fn config_hash(cfg: &AgentConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    Sha256::digest(json.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub struct Agent {
    kind: AgentKind,
    config: AgentConfig,
    snapshot: AgentSnapshot,
    context: Option<ContextFeature>,
    rng: ChaCha8Rng,
}

impl Agent {
    pub fn new(
        kind: AgentKind,
        config: AgentConfig,
        observation_dim: usize,
        action_count: usize,
        context: Option<ContextFeature>,
    ) -> Result<Self> {
        config.validate()?;
        if config.distortion.needs_context() && context.is_none() {
            return Err(Error::Config(
                "adaptive distortion needs an environment with a distance feature".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let w = config.hidden_width;
        let online = match kind {
            AgentKind::Dqn => Model::Scalar(Mlp::new("q", &[observation_dim, w, w, action_count], false, &mut rng)?),
            AgentKind::Iqn | AgentKind::Rqiqn => Model::Quantile(QuantileNetwork::new(
                observation_dim,
                action_count,
                w,
                config.embedding_dim,
                &mut rng,
            )?),
        };
        let snapshot = AgentSnapshot {
            target: online.clone(),
            online,
            optimizer: Adam::new(config.optimizer),
            step: 0,
            epsilon: 0.0,
        };
        let mut agent = Self {
            kind,
            config,
            snapshot,
            context,
            rng,
        };
        agent.snapshot.epsilon = agent.epsilon_at(0);
        Ok(agent)
    }

    pub fn kind(&self) -> AgentKind {
        self.kind
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn snapshot(&self) -> &AgentSnapshot {
        &self.snapshot
    }

    pub fn step(&self) -> u64 {
        self.snapshot.step
    }

    pub fn action_count(&self) -> usize {
        self.snapshot.online.action_count()
    }

    /// The online quantile network; `None` for DQN.
    pub fn quantile_network(&self) -> Option<&QuantileNetwork> {
        match &self.snapshot.online {
            Model::Quantile(q) => Some(q),
            Model::Scalar(_) => None,
        }
    }

    fn robust(&self) -> Option<&crate::robust::RobustConfig> {
        (self.kind == AgentKind::Rqiqn).then_some(&self.config.robust)
    }

    fn epsilon_at(&self, step: u64) -> f64 {
        self.robust().map_or(0.0, |r| r.epsilon_at(step))
    }

    /// Greedy action; fraction draws come from `rng`.
    pub fn greedy_action(&self, observation: &[f64], rng: &mut impl Rng) -> Result<usize> {
        match &self.snapshot.online {
            Model::Scalar(q) => greedy_q_action(q, observation),
            Model::Quantile(net) => select_action(
                observation,
                net,
                self.config.action_fractions,
                &self.config.distortion,
                self.context.map(|c| c.read(observation)),
                rng,
            ),
        }
    }

    /// ε-greedy when `explore`, pure greedy otherwise. Uses the agent's own
    /// random stream.
    pub fn act(&mut self, observation: &[f64], explore: bool) -> Result<usize> {
        if self.action_count() == 1 {
            return Ok(0);
        }
        let mut rng = self.rng.clone();
        let action = if explore && rng.random::<f64>() < self.config.exploration.rate(self.snapshot.step) {
            rng.random_range(0..self.action_count())
        } else {
            self.greedy_action(observation, &mut rng)?
        };
        self.rng = rng;
        Ok(action)
    }

    /// Loss and online-parameter gradients on a batch at the current step.
    pub fn loss_and_grads(&mut self, batch: &[&Transition]) -> Result<(f64, Vec<Tensor>)> {
        let step = self.snapshot.step;
        match (&self.snapshot.online, &self.snapshot.target) {
            (Model::Quantile(online), Model::Quantile(target)) => {
                let spec = TdSpec {
                    cfg: &self.config,
                    robust: (self.kind == AgentKind::Rqiqn).then_some(&self.config.robust),
                    context: self.context,
                    step,
                };
                rqiqn_loss_and_grads(batch, online, target, &spec, &mut self.rng)
            }
            (Model::Scalar(online), Model::Scalar(target)) => dqn_loss_and_grads(batch, online, target, &self.config),
            _ => Err(Error::Shape("online and target models differ in kind".into())),
        }
    }

    /// Advances the step counter and, when due, takes one gradient step on a
    /// batch drawn from `buffer` and refreshes the target network.
    pub fn train_step(&mut self, buffer: &ReplayBuffer) -> Result<TrainOutcome> {
        let t = self.snapshot.step;
        let epsilon = self.epsilon_at(t);
        let cfg = self.config;
        let mut loss = None;
        if t >= cfg.train_start && !buffer.is_empty() && t % cfg.train_period == 0 {
            let batch = buffer.sample(cfg.batch_size, &mut self.rng);
            let (value, mut grads) = self.loss_and_grads(&batch)?;
            if !value.is_finite() {
                return Err(Error::NonFinite(format!("loss at step {t}")));
            }
            if let Some(limit) = cfg.grad_clip {
                clip_global_norm(&mut grads, limit);
            }
            self.snapshot
                .optimizer
                .step(self.snapshot.online.params_mut(), &grads)?;
            loss = Some(value);
        }
        self.snapshot.step = t + 1;
        self.snapshot.epsilon = epsilon;
        let synced = self.snapshot.step > cfg.train_start && self.snapshot.step % cfg.sync_period == 0;
        if synced {
            self.sync_target();
        }
        Ok(TrainOutcome {
            step: t,
            epsilon,
            loss,
            synced,
        })
    }

    pub fn sync_target(&mut self) {
        let AgentSnapshot { online, target, .. } = &mut self.snapshot;
        target.copy_from(online);
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = SnapshotFile {
            format: SNAPSHOT_FORMAT.into(),
            version: SNAPSHOT_VERSION,
            kind: self.kind,
            config_hash: config_hash(&self.config),
            config: self.config,
            snapshot: self.snapshot.clone(),
        };
        let text = serde_json::to_string(&file).map_err(|e| Error::parse(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Restores an agent. The stored config hash must match the stored config.
    pub fn load(path: &Path, context: Option<ContextFeature>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: SnapshotFile = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
        if file.format != SNAPSHOT_FORMAT || file.version != SNAPSHOT_VERSION {
            return Err(Error::parse(
                path,
                format!("unsupported snapshot {} v{}", file.format, file.version),
            ));
        }
        if config_hash(&file.config) != file.config_hash {
            return Err(Error::parse(path, "config hash mismatch"));
        }
        let mut agent = Agent::new(
            file.kind,
            file.config,
            observation_dim(&file.snapshot.online),
            file.snapshot.online.action_count(),
            context,
        )?;
        agent.rng = ChaCha8Rng::seed_from_u64(file.config.seed ^ file.snapshot.step.rotate_left(17));
        agent.snapshot = file.snapshot;
        Ok(agent)
    }
}

fn observation_dim(model: &Model) -> usize {
    match model {
        Model::Quantile(q) => q.observation_dim(),
        Model::Scalar(m) => m.input_width(),
    }
}

/// Rescales all gradients so their joint L2 norm is at most `limit`.
pub fn clip_global_norm(grads: &mut [Tensor], limit: f64) {
    let norm = grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if norm > limit {
        let s = limit / norm;
        for g in grads {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
}
