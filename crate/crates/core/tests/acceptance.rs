//! Acceptance suite. Each criterion prints one PASS/FAIL line to stderr
//! (outside the test harness capture) and asserts at its stated tolerance.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rqiqn::agent::{Agent, AgentConfig, AgentKind, Exploration, QuantileFunction, QuantileNetwork, ReplayBuffer, Transition};
use rqiqn::autodiff::{Parameters, Tape, Tensor};
use rqiqn::env::{ChainConfig, ChainEnv, Environment};
use rqiqn::eval::{
    degeneration_metrics, dro_robust_minimizer_bruteforce, dro_worst_case_loss, empirical_quantile_slot, probe_grid,
    train_seed, DroOracleConfig, EmpiricalTargetLaw, ExperimentConfig, MetricsRecord, Task,
};
use rqiqn::loss::{check_loss, LossConfig};
use rqiqn::robust::{
    delta_bounded_2, delta_raw, epsilon_schedule, DistortionConfig, RobustConfig, WassersteinOrder,
};

fn report(id: u32, passed: bool, detail: &str) {
    let line = format!(
        "acceptance criterion {id}: {} - {detail}\n",
        if passed { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
}

// ---------------------------------------------------------------- criterion 1

fn oracle_inf(tau: f64, eps: f64) -> f64 {
    eps * (2.0 * tau - 1.0)
}

fn oracle_two(tau: f64, eps: f64) -> f64 {
    // q = 2, c = √(τ(1−τ)): (ε/2)(τ² − (1−τ)²)/c
    let c = (tau * (1.0 - tau)).sqrt();
    eps / 2.0 * (tau * tau - (1.0 - tau) * (1.0 - tau)) / c
}

fn oracle_bounded(tau: f64, eps: f64) -> f64 {
    eps / 2.0 * (1.0 - 2.0 * tau) / (tau * tau + (1.0 - tau) * (1.0 - tau)).sqrt()
}

#[test]
fn criterion_1_correction_properties() {
    let start = Instant::now();
    const M: usize = 10_000;
    // Exact mirror pairs: 1 − τ is exact for τ ≥ ½.
    let upper: Vec<f64> = (M / 2..M).map(|i| (i as f64 + 0.5) / M as f64).collect();
    let mut grid: Vec<f64> = upper.iter().rev().map(|u| 1.0 - u).collect();
    grid.extend(&upper);
    assert_eq!(grid.len(), M);

    let inf = |t: f64, e: f64| delta_raw(t, e, WassersteinOrder::Infinity);
    let two = |t: f64, e: f64| delta_raw(t, e, WassersteinOrder::Two);
    let forms: [(&str, &dyn Fn(f64, f64) -> f64, fn(f64, f64) -> f64); 3] = [
        ("inf", &inf, oracle_inf),
        ("two", &two, oracle_two),
        ("bounded-two", &delta_bounded_2, oracle_bounded),
    ];
    let mut failures = Vec::new();
    let (mut anti, mut mean, mut lin, mut vs_oracle) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for eps in [0.1, 1.0, 10.0] {
        for (name, f, oracle) in &forms {
            let vals: Vec<f64> = grid.iter().map(|&t| f(t, eps)).collect();
            for (&t, &v) in grid.iter().zip(&vals) {
                anti = anti.max((v + f(1.0 - t, eps)).abs());
                let o = oracle(t, eps);
                vs_oracle = vs_oracle.max((v - o).abs() / (1.0 + o.abs()));
                for a in [0.5, 2.0, 7.0] {
                    let scaled = f(t, a * eps);
                    lin = lin.max((scaled - a * v).abs() / (1.0 + scaled.abs()));
                }
            }
            if f(0.5, eps) != 0.0 {
                failures.push(format!("{name}: Δ(0.5) = {} at ε = {eps}", f(0.5, eps)));
            }
            mean = mean.max((vals.iter().sum::<f64>() / M as f64).abs());
            if *name == "inf" {
                if !vals.windows(2).all(|w| w[1] >= w[0]) {
                    failures.push(format!("inf not nondecreasing at ε = {eps}"));
                }
                if !vals.iter().all(|v| v.abs() <= eps) {
                    failures.push(format!("inf exceeds ε = {eps}"));
                }
            }
            if *name == "bounded-two" {
                if !vals.windows(2).all(|w| w[1] <= w[0]) {
                    failures.push(format!("bounded not nonincreasing at ε = {eps}"));
                }
                if !vals.iter().all(|v| v.abs() <= eps / 2.0) {
                    failures.push(format!("bounded exceeds ε/2 at ε = {eps}"));
                }
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if anti > 1e-12 {
        failures.push(format!("antisymmetry {anti:.2e}"));
    }
    if mean > 1e-8 {
        failures.push(format!("quadrature mean {mean:.2e}"));
    }
    if lin > 1e-12 {
        failures.push(format!("linearity {lin:.2e}"));
    }
    if vs_oracle > 1e-12 {
        failures.push(format!("closed form vs independent formula {vs_oracle:.2e}"));
    }
    if elapsed >= 1.0 {
        failures.push(format!("runtime {elapsed:.2}s"));
    }
    let passed = failures.is_empty();
    report(
        1,
        passed,
        &format!(
            "antisymmetry {anti:.1e}, mean {mean:.1e}, linearity {lin:.1e}, oracle {vs_oracle:.1e}, {elapsed:.2}s{}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    );
    assert!(passed, "{failures:?}");
}

// ---------------------------------------------------------------- criteria 2, 3

/// Order statistic `y_(k)` with the least `k` such that `k ≥ τ·N`, found by
/// counting rather than sorting.
fn oracle_slot(samples: &[f64], tau: f64) -> f64 {
    let n = samples.len() as f64;
    let mut candidates = samples.to_vec();
    candidates.sort_by(f64::total_cmp);
    candidates
        .into_iter()
        .find(|q| samples.iter().filter(|y| **y <= *q).count() as f64 / n >= tau)
        .expect("the maximum always qualifies")
}

fn random_samples(rng: &mut impl Rng, max: usize) -> Vec<f64> {
    let n = rng.random_range(1..=max);
    (0..n).map(|_| rng.random_range(-5.0..5.0)).collect()
}

#[test]
fn criterion_2_robust_minimizer_matches_closed_form() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cfg = DroOracleConfig::default();
    let mut worst = 0.0f64;
    let mut endpoint_gap = 0.0f64;
    for i in 0..100 {
        let samples = random_samples(&mut rng, 10);
        let tau = rng.random_range(0.1..=0.9);
        let eps = rng.random_range(0.0..=2.0);
        let law = EmpiricalTargetLaw::new(samples.clone()).unwrap();
        let brute = dro_robust_minimizer_bruteforce(&law, tau, eps, &cfg).unwrap();
        let closed = oracle_slot(&samples, tau) + eps * (2.0 * tau - 1.0);
        worst = worst.max((brute - closed).abs());

        // Spot-check the per-atom worst case against a dense scan of shifts.
        if i % 10 == 0 {
            for q in [closed - 1.0, closed, closed + 0.7] {
                let dense: f64 = samples
                    .iter()
                    .map(|y| {
                        (0..=400)
                            .map(|k| check_loss(y + eps * (k as f64 / 200.0 - 1.0) - q, tau))
                            .fold(f64::NEG_INFINITY, f64::max)
                    })
                    .sum::<f64>()
                    / samples.len() as f64;
                let lib = dro_worst_case_loss(&law, q, tau, eps, WassersteinOrder::Infinity).unwrap();
                endpoint_gap = endpoint_gap.max((dense - lib).abs());
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let passed = worst <= 1e-3 && endpoint_gap <= 1e-12 && elapsed < 30.0;
    report(
        2,
        passed,
        &format!("max |brute - closed| = {worst:.2e} (tol 1e-3), dense-scan check {endpoint_gap:.1e}, {elapsed:.2}s"),
    );
    assert!(passed);
}

#[test]
fn criterion_3_empirical_coverage() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut violations = 0;
    for i in 0..1000 {
        let mut samples = random_samples(&mut rng, 50);
        if i % 3 == 0 {
            samples.iter_mut().for_each(|y| *y = y.round());
        }
        let tau = rng.random_range(1e-6..1.0 - 1e-6);
        let q = empirical_quantile_slot(&EmpiricalTargetLaw::new(samples.clone()).unwrap(), tau).unwrap();
        let n = samples.len() as f64;
        let below = samples.iter().filter(|y| **y < q).count() as f64 / n;
        let at_or_below = samples.iter().filter(|y| **y <= q).count() as f64 / n;
        if !(below <= tau && tau <= at_or_below) {
            violations += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let passed = violations == 0 && elapsed < 5.0;
    report(3, passed, &format!("{violations} violations over 1000 laws, {elapsed:.2}s"));
    assert!(passed);
}

// ---------------------------------------------------------------- criterion 4

fn chain_buffer(n: usize, seed: u64) -> ReplayBuffer {
    let mut env = ChainEnv::new(ChainConfig { seed, ..Default::default() }).unwrap();
    let mut buf = ReplayBuffer::new(n);
    let mut s = env.reset();
    for _ in 0..n {
        let st = env.step(0).unwrap();
        buf.push(Transition {
            state: s,
            action: 0,
            reward: st.reward,
            next_state: st.observation.clone(),
            done: st.done,
        });
        s = if st.done { env.reset() } else { st.observation };
    }
    buf
}

fn record_bits(r: &MetricsRecord) -> Vec<u64> {
    let mut v = vec![
        r.step,
        r.loss.map_or(u64::MAX, f64::to_bits),
        r.epsilon.to_bits(),
        r.eval_return_mean.to_bits(),
        r.eval_return_std.to_bits(),
        r.success_rate.to_bits(),
        r.collision_rate.to_bits(),
        r.timeout_rate.to_bits(),
    ];
    v.extend(r.probe_state_std.iter().map(|x| x.to_bits()));
    v
}

#[test]
fn criterion_4_zero_radius_reduction() {
    let agent_cfg = AgentConfig {
        hidden_width: 32,
        embedding_dim: 16,
        batch_size: 32,
        train_start: 200,
        sync_period: 250,
        robust: RobustConfig { epsilon0: 0.0, ..Default::default() },
        ..Default::default()
    };

    // Losses and gradients on a shared batch with shared draws.
    let buf = chain_buffer(300, 5);
    let batch: Vec<&Transition> = (0..64).map(|i| buf.get(i)).collect();
    let mut robust = Agent::new(AgentKind::Rqiqn, agent_cfg, 4, 1, None).unwrap();
    let mut plain = Agent::new(AgentKind::Iqn, agent_cfg, 4, 1, None).unwrap();
    let (la, ga) = robust.loss_and_grads(&batch).unwrap();
    let (lb, gb) = plain.loss_and_grads(&batch).unwrap();
    let bits = |g: &[Tensor]| g.iter().flat_map(|t| t.data().iter().map(|v| v.to_bits())).collect::<Vec<_>>();
    let same_step = la.to_bits() == lb.to_bits() && bits(&ga) == bits(&gb);

    // Full training metrics on the chain with a shared seed.
    let mut cfg = ExperimentConfig::new(Task::Chain, AgentKind::Rqiqn);
    cfg.total_steps = 3000;
    cfg.eval_period = 500;
    cfg.eval_episodes = 10;
    cfg.agent_config = agent_cfg;
    let iqn = ExperimentConfig { agent: AgentKind::Iqn, ..cfg.clone() };
    let a = train_seed(&cfg, 9, None).unwrap();
    let b = train_seed(&iqn, 9, None).unwrap();
    let same_metrics = a.records.len() == 6 && a.records.iter().map(record_bits).eq(b.records.iter().map(record_bits));
    let same_params = a.agent.snapshot().online == b.agent.snapshot().online
        && a.agent.snapshot().target == b.agent.snapshot().target;

    let passed = same_step && same_metrics && same_params;
    report(
        4,
        passed,
        &format!("loss+gradients bitwise: {same_step}, metrics bitwise: {same_metrics}, parameters bitwise: {same_params}"),
    );
    assert!(passed);
}

// ---------------------------------------------------------------- criterion 5

#[test]
fn criterion_5_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d = rng.random_range(1..=6);
        let a = rng.random_range(1..=4);
        let w = rng.random_range(2..=10);
        let emb = rng.random_range(2..=8);
        let (b, n) = (rng.random_range(1..=3), rng.random_range(1..=4));
        let mut net = QuantileNetwork::new(d, a, w, emb, &mut rng).unwrap();
        let obs = Tensor::matrix(b, d, (0..b * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        let taus: Vec<f64> = (0..b * n).map(|_| rng.random_range(0.02..0.98)).collect();
        let weights: Vec<f64> = (0..b * n * a).map(|_| rng.random_range(-1.0..1.0)).collect();

        let mut tape = Tape::new();
        let vars = net.bind(&mut tape, true);
        let out = net.forward(&mut tape, &vars, &obs, &taus, n).unwrap();
        let sq = tape.hadamard(out, out).unwrap();
        let m = tape.mean(sq).unwrap();
        let lin = tape.dot_const(out, weights.clone()).unwrap();
        let total = tape.add(m, lin).unwrap();
        let mut grads = tape.backward(total).unwrap();
        let analytic: Vec<f64> = vars.iter().flat_map(|v| grads.take(*v).unwrap().into_data()).collect();

        let f = |net: &QuantileNetwork| {
            let z = net.quantiles(&obs, &taus, n).unwrap();
            let z = z.data();
            z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64 + z.iter().zip(&weights).map(|(v, w)| v * w).sum::<f64>()
        };
        let h = 1e-5;
        let mut numeric = Vec::new();
        let sizes: Vec<usize> = net.params().iter().map(|p| p.value.len()).collect();
        for (pi, len) in sizes.into_iter().enumerate() {
            for k in 0..len {
                let orig = net.params()[pi].value.data()[k];
                net.params_mut()[pi].value.data_mut()[k] = orig + h;
                let up = f(&net);
                net.params_mut()[pi].value.data_mut()[k] = orig - h;
                let down = f(&net);
                net.params_mut()[pi].value.data_mut()[k] = orig;
                numeric.push((up - down) / (2.0 * h));
            }
        }
        let diff = analytic.iter().zip(&numeric).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let scale = analytic.iter().chain(&numeric).map(|v| v.abs()).fold(1e-12, f64::max);
        worst = worst.max(diff / scale);
    }
    let passed = worst < 1e-4;
    report(5, passed, &format!("max relative error {worst:.2e} over 100 random networks (tol 1e-4)"));
    assert!(passed);
}

// ---------------------------------------------------------------- criterion 6

#[test]
fn criterion_6_radius_schedule() {
    let cfg = RobustConfig { epsilon0: 1.0, sharpness: 1.2e-6, midpoint: 3.75e6, ..Default::default() };
    let half = epsilon_schedule(cfg.midpoint, &cfg) == 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut steps: Vec<f64> = (0..1000).map(|_| rng.random_range(0.0..1e7)).collect();
    steps.sort_by(f64::total_cmp);
    steps.dedup();
    let vals: Vec<f64> = steps.iter().map(|&t| epsilon_schedule(t, &cfg)).collect();
    let decreasing = vals.windows(2).all(|w| w[1] < w[0]);
    let start = epsilon_schedule(0.0, &cfg);
    let oracle = 1.0 / (1.0 + (-4.5f64).exp());
    let passed = half && decreasing && (start - 0.98901).abs() <= 1e-5 && (start - oracle).abs() < 1e-15;
    report(
        6,
        passed,
        &format!("eps(t0) = eps0/2: {half}, strictly decreasing: {decreasing}, eps(0) = {start:.7} (target 0.98901 ± 1e-5)"),
    );
    assert!(passed);
}

// ---------------------------------------------------------------- criterion 7

const CHAIN_STEPS: u64 = 200_000;

fn chain_experiment(kind: AgentKind) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(Task::Chain, kind);
    cfg.total_steps = CHAIN_STEPS;
    cfg.eval_period = CHAIN_STEPS;
    cfg.eval_episodes = 3;
    cfg.agent_config = AgentConfig {
        hidden_width: 32,
        embedding_dim: 32,
        batch_size: 32,
        train_period: 4,
        train_start: 1000,
        sync_period: 1000,
        // Plain IQN keeps its usual quantile Huber loss; the robust agent
        // uses the check loss with the bounded p = 2 correction.
        loss: match kind {
            AgentKind::Iqn => LossConfig::quantile_huber(1.0),
            _ => LossConfig::check(),
        },
        ..Default::default()
    };
    // The navigation-scale schedule compressed to the run length.
    let scale = CHAIN_STEPS as f64 / 3e6;
    cfg.agent_config.robust = RobustConfig {
        order: WassersteinOrder::Two,
        epsilon0: 1.0,
        midpoint: 5.9e5 * scale,
        sharpness: 1.2e-6 / scale,
        ..Default::default()
    };
    cfg
}

#[test]
fn criterion_7_chain_degeneration() {
    let start = Instant::now();
    let true_std = 0.99f64.powi(2) * 5f64.sqrt();
    let taus = probe_grid(99);
    let mut rows = Vec::new();
    let (mut wins, mut wider) = (0, 0);
    let (mut sum_iqn, mut sum_rq) = (0.0, 0.0);
    for seed in 0..5 {
        let mut stds = [0.0; 2];
        for (i, kind) in [AgentKind::Iqn, AgentKind::Rqiqn].into_iter().enumerate() {
            let cfg = chain_experiment(kind);
            let run = train_seed(&cfg, seed, None).unwrap();
            assert!(run.aborted.is_none());
            let rep = degeneration_metrics(run.agent.quantile_network().unwrap(), &cfg.chain, &taus).unwrap();
            let p0 = rep.probe(0).unwrap();
            assert!((p0.true_std - true_std).abs() < 1e-12);
            stds[i] = p0.learned_std;
        }
        let [iqn, rq] = stds;
        sum_iqn += iqn;
        sum_rq += rq;
        wider += usize::from(rq >= iqn);
        wins += usize::from((rq - true_std).abs() < (iqn - true_std).abs());
        rows.push(format!("seed {seed}: iqn {iqn:.3} rqiqn {rq:.3}"));
    }
    let (mean_iqn, mean_rq) = (sum_iqn / 5.0, sum_rq / 5.0);
    let passed = mean_rq >= mean_iqn && wins >= 3;
    report(
        7,
        passed,
        &format!(
            "state-0 std mean iqn {mean_iqn:.3} vs rqiqn {mean_rq:.3} (true {true_std:.4}); rqiqn wider in {wider}/5, closer in {wins}/5 (need 3); [{}] {:.0}s",
            rows.join(", "),
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(passed);
}

// ---------------------------------------------------------------- criterion 8

const NAV_STEPS: u64 = 50_000;

fn nav_experiment(kind: AgentKind, distortion: DistortionConfig) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(Task::Nav, kind);
    cfg.total_steps = NAV_STEPS;
    cfg.eval_period = NAV_STEPS;
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
        exploration: Exploration { start: 1.0, end: 0.05, horizon: NAV_STEPS / 3 },
        ..Default::default()
    };
    let scale = NAV_STEPS as f64 / 3e6;
    cfg.agent_config.robust.midpoint = 5.9e5 * scale;
    cfg.agent_config.robust.sharpness = 1.2e-6 / scale;
    cfg
}

#[test]
fn criterion_8_navigation() {
    let start = Instant::now();
    let arms = [
        ("iqn", AgentKind::Iqn, DistortionConfig::identity()),
        ("rqiqn", AgentKind::Rqiqn, DistortionConfig::identity()),
        ("rqiqn-adaptive", AgentKind::Rqiqn, DistortionConfig::adaptive(5.0, 0.25)),
    ];
    let mut success = [0.0; 3];
    let mut collision = [0.0; 3];
    for (i, (_, kind, dist)) in arms.iter().enumerate() {
        for seed in 0..3 {
            let run = train_seed(&nav_experiment(*kind, *dist), seed, None).unwrap();
            assert!(run.aborted.is_none());
            let r = run.records.last().unwrap();
            assert!((r.success_rate + r.collision_rate + r.timeout_rate - 1.0).abs() < 1e-12);
            success[i] += r.success_rate / 3.0;
            collision[i] += r.collision_rate / 3.0;
        }
    }
    let passed = success[1] >= success[0] && collision[2] <= collision[1];
    let summary: Vec<String> = arms
        .iter()
        .enumerate()
        .map(|(i, (name, ..))| format!("{name} success {:.3} collision {:.3}", success[i], collision[i]))
        .collect();
    report(
        8,
        passed,
        &format!(
            "{}; need rqiqn success >= iqn and adaptive collision <= rqiqn; {:.0}s",
            summary.join(", "),
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(passed);
}

// ---------------------------------------------------------------- criterion 9

#[test]
fn criterion_9_atari_not_reproduced() {
    let _ = std::io::stderr().write_all(
        b"acceptance criterion 9: N/A - 200M-frame Atari results are out of desk scale; substituted by criteria 1-8\n",
    );
}

#[test]
fn shared_helpers_sanity() {
    assert_eq!(oracle_slot(&[0.0, 10.0], 0.5), 0.0);
    assert_eq!(oracle_slot(&[3.0, 1.0, 2.0], 0.9), 3.0);
    let net = QuantileNetwork::new(2, 3, 4, 4, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(net.action_count(), 3);
}
