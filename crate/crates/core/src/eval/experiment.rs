use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::degeneration::{degeneration_metrics, population_std, probe_grid};
use super::metrics::{MetricsLog, MetricsRecord};
use crate::agent::{Agent, AgentConfig, AgentKind, ReplayBuffer, Transition};
use crate::env::{ChainConfig, ChainEnv, Environment, LayoutSampler, NavEnv, TerminalKind};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Chain,
    Nav,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub agent: AgentKind,
    pub total_steps: u64,
    #[serde(default = "default_eval_period")]
    pub eval_period: u64,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    /// Seeds the evaluation layouts and chain rewards; must differ from every
    /// training seed.
    #[serde(default = "default_eval_seed")]
    pub eval_seed: u64,
    /// Fractions on the probe grid for chain spread metrics.
    #[serde(default = "default_probe_fractions")]
    pub probe_fractions: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub agent_config: AgentConfig,
    #[serde(default)]
    pub chain: ChainConfig,
    #[serde(default)]
    pub nav: LayoutSampler,
}

fn default_eval_period() -> u64 {
    10_000
}

fn default_eval_episodes() -> usize {
    100
}

fn default_eval_seed() -> u64 {
    1_000_003
}

fn default_probe_fractions() -> usize {
    99
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentConfig {
    pub fn new(task: Task, agent: AgentKind) -> Self {
        Self {
            task,
            agent,
            total_steps: 0,
            eval_period: default_eval_period(),
            eval_episodes: default_eval_episodes(),
            seeds: vec![0],
            eval_seed: default_eval_seed(),
            probe_fractions: default_probe_fractions(),
            output_dir: default_output_dir(),
            agent_config: AgentConfig::default(),
            chain: ChainConfig::default(),
            nav: LayoutSampler::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.total_steps > 0 && self.total_steps <= self.agent_config.train_start {
            return bad(format!(
                "total_steps {} must exceed train_start {}",
                self.total_steps, self.agent_config.train_start
            ));
        }
        if self.eval_period == 0 || self.eval_episodes == 0 {
            return bad("eval_period and eval_episodes must be positive".into());
        }
        if self.seeds.contains(&self.eval_seed) {
            return bad(format!("eval_seed {} collides with a training seed", self.eval_seed));
        }
        if self.task == Task::Chain && self.chain.gamma != self.agent_config.gamma {
            return bad(format!(
                "chain gamma {} differs from agent gamma {}",
                self.chain.gamma, self.agent_config.gamma
            ));
        }
        self.agent_config.validate()?;
        match self.task {
            Task::Chain => self.chain.validate(),
            Task::Nav => self.nav.validate(),
        }
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::parse(path, e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// The agent config for one seed: network init and replay draws follow it.
    pub fn agent_config_for(&self, seed: u64) -> AgentConfig {
        AgentConfig {
            seed,
            ..self.agent_config
        }
    }

    pub fn log_path(&self, seed: u64) -> PathBuf {
        self.output_dir.join(format!("{}-seed{seed}.jsonl", self.agent.name()))
    }

    pub fn snapshot_path(&self, seed: u64) -> PathBuf {
        self.output_dir.join(format!("{}-seed{seed}.snapshot.json", self.agent.name()))
    }
}

fn training_env(cfg: &ExperimentConfig, seed: u64) -> Result<Box<dyn Environment>> {
    Ok(match cfg.task {
        Task::Chain => Box::new(ChainEnv::new(ChainConfig { seed, ..cfg.chain })?),
        Task::Nav => Box::new(NavEnv::sampled(cfg.nav.clone(), seed)?),
    })
}

fn evaluation_env(cfg: &ExperimentConfig) -> Result<Box<dyn Environment>> {
    Ok(match cfg.task {
        Task::Chain => Box::new(ChainEnv::new(ChainConfig {
            seed: cfg.eval_seed,
            ..cfg.chain
        })?),
        Task::Nav => Box::new(NavEnv::sampled(cfg.nav.clone(), cfg.eval_seed)?),
    })
}

/// Greedy-policy statistics over held-out episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub return_mean: f64,
    pub return_std: f64,
    pub success_rate: f64,
    pub collision_rate: f64,
    pub timeout_rate: f64,
    pub mean_elapsed: f64,
    pub mean_energy: f64,
}

/// Runs `cfg.eval_episodes` greedy episodes. The same held-out episodes are
/// replayed on every call.
pub fn evaluate(agent: &Agent, cfg: &ExperimentConfig) -> Result<EvalSummary> {
    let mut env = evaluation_env(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.eval_seed);
    let mut returns = Vec::with_capacity(cfg.eval_episodes);
    let mut counts = [0usize; 3];
    let (mut elapsed, mut energy) = (0.0, 0.0);
    for _ in 0..cfg.eval_episodes {
        let mut obs = env.reset();
        let outcome = loop {
            let action = agent.greedy_action(&obs, &mut rng)?;
            let step = env.step(action)?;
            if let Some(outcome) = step.outcome {
                break outcome;
            }
            obs = step.observation;
        };
        returns.push(outcome.episode_return);
        counts[match outcome.kind {
            TerminalKind::Success => 0,
            TerminalKind::Collision => 1,
            TerminalKind::Timeout => 2,
        }] += 1;
        elapsed += outcome.elapsed;
        energy += outcome.energy_proxy;
    }
    let n = cfg.eval_episodes as f64;
    Ok(EvalSummary {
        episodes: cfg.eval_episodes,
        return_mean: returns.iter().sum::<f64>() / n,
        return_std: population_std(&returns),
        success_rate: counts[0] as f64 / n,
        collision_rate: counts[1] as f64 / n,
        timeout_rate: counts[2] as f64 / n,
        mean_elapsed: elapsed / n,
        mean_energy: energy / n,
    })
}

/// One trained seed. `aborted` carries the diagnostic when training stopped
/// on a non-finite value.
pub struct SeedRun {
    pub seed: u64,
    pub agent: Agent,
    pub records: Vec<MetricsRecord>,
    pub aborted: Option<String>,
}

/// Trains one seed, evaluating every `eval_period` steps and after the last
/// step. Records also go to `log` as they are produced.
pub fn train_seed(cfg: &ExperimentConfig, seed: u64, mut log: Option<&mut MetricsLog>) -> Result<SeedRun> {
    cfg.validate()?;
    let started = Instant::now();
    let mut env = training_env(cfg, seed)?;
    let mut agent = Agent::new(
        cfg.agent,
        cfg.agent_config_for(seed),
        env.observation_dim(),
        env.action_count(),
        env.context_feature(),
    )?;
    let mut buffer = ReplayBuffer::new(cfg.agent_config.replay_capacity);
    let mut records = Vec::new();
    let mut aborted = None;
    let mut loss_sum = 0.0;
    let mut loss_count = 0usize;
    let taus = probe_grid(cfg.probe_fractions);

    let mut emit = |rec: MetricsRecord, records: &mut Vec<MetricsRecord>| -> Result<()> {
        if let Some(log) = log.as_deref_mut() {
            log.append(&rec)?;
        }
        records.push(rec);
        Ok(())
    };

    let mut obs = env.reset();
    for t in 0..cfg.total_steps {
        let action = agent.act(&obs, true)?;
        let step = env.step(action)?;
        buffer.push(Transition {
            state: obs,
            action,
            reward: step.reward,
            next_state: step.observation.clone(),
            done: step.done,
        });
        obs = if step.done { env.reset() } else { step.observation };

        let outcome = match agent.train_step(&buffer) {
            Ok(o) => o,
            Err(Error::NonFinite(what)) => {
                let note = format!("aborted at step {t}: non-finite {what}");
                emit(diagnostic(cfg, seed, t, &note, started), &mut records)?;
                aborted = Some(note);
                break;
            }
            Err(e) => return Err(e),
        };
        if let Some(l) = outcome.loss {
            loss_sum += l;
            loss_count += 1;
        }

        let done = t + 1;
        if done % cfg.eval_period == 0 || done == cfg.total_steps {
            let eval = evaluate(&agent, cfg)?;
            let probe_state_std = match (cfg.task, agent.quantile_network()) {
                (Task::Chain, Some(net)) => degeneration_metrics(net, &cfg.chain, &taus)?
                    .probes
                    .iter()
                    .map(|p| p.learned_std)
                    .collect(),
                _ => Vec::new(),
            };
            let rec = MetricsRecord {
                step: done,
                loss: (loss_count > 0).then(|| loss_sum / loss_count as f64),
                epsilon: outcome.epsilon,
                eval_return_mean: eval.return_mean,
                eval_return_std: eval.return_std,
                success_rate: eval.success_rate,
                collision_rate: eval.collision_rate,
                timeout_rate: eval.timeout_rate,
                probe_state_std,
                wall_clock_secs: started.elapsed().as_secs_f64(),
                seed,
                agent: cfg.agent.name().into(),
                note: None,
            };
            loss_sum = 0.0;
            loss_count = 0;
            emit(rec, &mut records)?;
        }
    }
    Ok(SeedRun {
        seed,
        agent,
        records,
        aborted,
    })
}

fn diagnostic(cfg: &ExperimentConfig, seed: u64, step: u64, note: &str, started: Instant) -> MetricsRecord {
    MetricsRecord {
        step,
        loss: None,
        epsilon: 0.0,
        eval_return_mean: 0.0,
        eval_return_std: 0.0,
        success_rate: 0.0,
        collision_rate: 0.0,
        timeout_rate: 0.0,
        probe_state_std: Vec::new(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
        seed,
        agent: cfg.agent.name().into(),
        note: Some(note.into()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub log: PathBuf,
    pub snapshot: Option<PathBuf>,
    pub records: usize,
    pub aborted: Option<String>,
    pub final_record: Option<MetricsRecord>,
}

/// Trains every seed in turn, writing `<agent>-seed<k>.jsonl` and a final
/// snapshot per seed under the output directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<SeedSummary>> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let mut out = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let path = cfg.log_path(seed);
        let mut log = MetricsLog::create(&path)?;
        let run = train_seed(cfg, seed, Some(&mut log))?;
        let snapshot = if cfg.total_steps > 0 && run.aborted.is_none() {
            let p = cfg.snapshot_path(seed);
            run.agent.save(&p)?;
            Some(p)
        } else {
            None
        };
        out.push(SeedSummary {
            seed,
            log: path,
            snapshot,
            records: run.records.len(),
            aborted: run.aborted,
            final_record: run.records.last().cloned(),
        });
    }
    Ok(out)
}
