//! Trains IQN and robust IQN on the four-state chain and compares the
//! learned return spread at each state with the true one.
//!
//! `cargo run --release --example chain_degeneration -- 200000`

use rqiqn::agent::{AgentConfig, AgentKind};
use rqiqn::eval::{degeneration_metrics, probe_grid, train_seed, ExperimentConfig, Task};
use rqiqn::loss::LossConfig;

fn main() -> rqiqn::Result<()> {
    let steps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(40_000);
    let scale = steps as f64 / 3e6;
    for (kind, loss) in [
        (AgentKind::Iqn, LossConfig::quantile_huber(1.0)),
        (AgentKind::Rqiqn, LossConfig::check()),
    ] {
        let mut cfg = ExperimentConfig::new(Task::Chain, kind);
        cfg.total_steps = steps;
        cfg.eval_period = steps / 4;
        cfg.eval_episodes = 5;
        cfg.agent_config = AgentConfig {
            hidden_width: 32,
            embedding_dim: 32,
            batch_size: 32,
            train_period: 4,
            loss,
            ..Default::default()
        };
        cfg.agent_config.robust.midpoint = 5.9e5 * scale;
        cfg.agent_config.robust.sharpness = 1.2e-6 / scale;

        let run = train_seed(&cfg, 0, None)?;
        let net = run.agent.quantile_network().expect("quantile agent");
        let report = degeneration_metrics(net, &cfg.chain, &probe_grid(99))?;
        println!("{}:", kind.name());
        for p in &report.probes {
            println!(
                "  state {}: learned std {:.3}, true std {:.3}, gap {:.3}",
                p.state, p.learned_std, p.true_std, p.true_gap
            );
        }
        let s0 = report.probe(0).expect("state 0");
        let picks = [4, 24, 49, 74, 94];
        let fmt = |v: &[f64]| picks.iter().map(|&i| format!("{:>6.2}", v[i])).collect::<Vec<_>>().join(" ");
        println!("  state 0 quantiles at tau = 0.05 0.25 0.5 0.75 0.95");
        println!("    learned {}", fmt(&s0.learned_quantiles));
        println!("    true    {}", fmt(&s0.true_quantiles));
    }
    Ok(())
}
