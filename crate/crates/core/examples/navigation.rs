//! Trains IQN, robust IQN and robust IQN with distance-adaptive CVaR on the
//! vortex navigation task, then reports held-out success, collision and
//! timeout rates. Also writes the first held-out layout to a TOML file.
//!
//! `cargo run --release --example navigation -- 50000`

use rqiqn::agent::{AgentConfig, AgentKind, Exploration};
use rqiqn::env::NavEnv;
use rqiqn::eval::{train_seed, ExperimentConfig, Task};
use rqiqn::robust::DistortionConfig;

fn main() -> rqiqn::Result<()> {
    let steps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20_000);
    let scale = steps as f64 / 3e6;

    let layout = std::env::temp_dir().join("rqiqn-eval-layout.toml");
    let cfg = ExperimentConfig::new(Task::Nav, AgentKind::Iqn);
    NavEnv::sampled(cfg.nav.clone(), cfg.eval_seed)?.layout().save(&layout)?;
    println!("held-out layout -> {}", layout.display());

    for (name, kind, distortion) in [
        ("iqn", AgentKind::Iqn, DistortionConfig::identity()),
        ("rqiqn", AgentKind::Rqiqn, DistortionConfig::identity()),
        ("rqiqn+adaptive", AgentKind::Rqiqn, DistortionConfig::adaptive(5.0, 0.25)),
    ] {
        let mut cfg = ExperimentConfig::new(Task::Nav, kind);
        cfg.total_steps = steps;
        cfg.eval_period = steps;
        cfg.eval_episodes = 100;
        cfg.agent_config = AgentConfig {
            hidden_width: 64,
            embedding_dim: 32,
            batch_size: 32,
            action_fractions: 8,
            train_period: 4,
            train_start: 2000,
            sync_period: 2000,
            distortion,
            exploration: Exploration { start: 1.0, end: 0.05, horizon: steps / 3 },
            ..Default::default()
        };
        cfg.agent_config.robust.midpoint = 5.9e5 * scale;
        cfg.agent_config.robust.sharpness = 1.2e-6 / scale;

        let run = train_seed(&cfg, 0, None)?;
        let r = run.records.last().expect("one evaluation at the last step");
        println!(
            "{name:>15}: success {:.2} collision {:.2} timeout {:.2} return {:.2}",
            r.success_rate, r.collision_rate, r.timeout_rate, r.eval_return_mean
        );
    }
    Ok(())
}
