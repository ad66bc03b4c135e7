//! Self-check suite behind `rqiqn verify`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::experiment::{train_seed, ExperimentConfig, Task};
use super::oracle::{
    dro_robust_minimizer_bruteforce, empirical_quantile_slot, DroOracleConfig, EmpiricalTargetLaw,
};
use crate::agent::{AgentConfig, AgentKind, QuantileFunction, QuantileNetwork};
use crate::autodiff::{Parameters, Tape, Tensor};
use crate::error::Result;
use crate::robust::{delta_bounded_2, delta_raw, epsilon_schedule, RobustConfig, WassersteinOrder};

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    CheckResult {
        name,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

pub fn run_all() -> Vec<CheckResult> {
    vec![
        timed("correction-properties", || Ok(correction_properties())),
        timed("dro-oracle-equivalence", || dro_equivalence(100, 7)),
        timed("empirical-coverage", || coverage(1000, 11)),
        timed("zero-radius-reduction", zero_radius_reduction),
        timed("gradient-check", || gradient_check(100, 13)),
        timed("radius-schedule", || Ok(schedule())),
    ]
}

/// Midpoint grid of `m` (even) fractions built from exact mirror pairs:
/// the upper half is `(i + ½)/m` and the lower half is `1 − τ`, which is
/// exact for `τ ≥ ½`.
pub fn mirrored_grid(m: usize) -> Vec<f64> {
    let upper: Vec<f64> = (m / 2..m).map(|i| (i as f64 + 0.5) / m as f64).collect();
    let mut grid: Vec<f64> = upper.iter().rev().map(|u| 1.0 - u).collect();
    grid.extend(upper);
    grid
}

/// Antisymmetry, centering, monotonicity, bounds and linearity of the
/// corrections on a grid of 10⁴ fractions.
pub fn correction_properties() -> (bool, String) {
    const M: usize = 10_000;
    let grid = mirrored_grid(M);
    let mut worst_anti: f64 = 0.0;
    let mut worst_mean: f64 = 0.0;
    let mut worst_lin: f64 = 0.0;
    let mut ok = true;
    type Corr = fn(f64, f64) -> f64;
    let forms: [(&str, Corr); 3] = [
        ("inf", |t, e| delta_raw(t, e, WassersteinOrder::Infinity)),
        ("two", |t, e| delta_raw(t, e, WassersteinOrder::Two)),
        ("bounded-two", delta_bounded_2),
    ];
    for eps in [0.1, 1.0, 10.0] {
        for (name, f) in forms {
            let vals: Vec<f64> = grid.iter().map(|&t| f(t, eps)).collect();
            for (&t, &v) in grid.iter().zip(&vals) {
                worst_anti = worst_anti.max((v + f(1.0 - t, eps)).abs());
                let scaled = f(t, 3.0 * eps);
                worst_lin = worst_lin.max((scaled - 3.0 * v).abs() / (1.0 + scaled.abs()));
            }
            ok &= f(0.5, eps) == 0.0;
            worst_mean = worst_mean.max((vals.iter().sum::<f64>() / M as f64).abs());
            match name {
                "inf" => {
                    ok &= vals.windows(2).all(|w| w[1] >= w[0]);
                    ok &= vals.iter().all(|v| v.abs() <= eps);
                }
                "bounded-two" => {
                    ok &= vals.windows(2).all(|w| w[1] <= w[0]);
                    ok &= vals.iter().all(|v| v.abs() <= eps / 2.0);
                }
                _ => {}
            }
        }
    }
    ok &= worst_anti <= 1e-12 && worst_mean <= 1e-8 && worst_lin <= 1e-12;
    (
        ok,
        format!("antisymmetry {worst_anti:.2e}, mean {worst_mean:.2e}, linearity {worst_lin:.2e}"),
    )
}

fn random_law(rng: &mut impl Rng, max_atoms: usize) -> Result<EmpiricalTargetLaw> {
    let n = rng.random_range(1..=max_atoms);
    EmpiricalTargetLaw::new((0..n).map(|_| rng.random_range(-5.0..5.0)).collect())
}

/// Grid minimizer of the ∞-ball robust risk against `q⁰ + ε(2τ − 1)`.
pub fn dro_equivalence(instances: usize, seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = DroOracleConfig::default();
    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let law = random_law(&mut rng, 10)?;
        let tau = rng.random_range(0.1..0.9);
        let eps = rng.random_range(0.0..2.0);
        let brute = dro_robust_minimizer_bruteforce(&law, tau, eps, &cfg)?;
        let closed = empirical_quantile_slot(&law, tau)? + eps * (2.0 * tau - 1.0);
        worst = worst.max((brute - closed).abs());
    }
    Ok((worst <= cfg.resolution, format!("max gap {worst:.2e} over {instances} instances")))
}

pub fn coverage(laws: usize, seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    for _ in 0..laws {
        let mut law = random_law(&mut rng, 50)?;
        if rng.random_bool(0.3) {
            // Force ties.
            let s: Vec<f64> = law.samples().iter().map(|y| y.round()).collect();
            law = EmpiricalTargetLaw::new(s)?;
        }
        let tau = rng.random_range(1e-6..1.0 - 1e-6);
        let q = empirical_quantile_slot(&law, tau)?;
        if !(law.prob_below(q) <= tau && tau <= law.prob_at_or_below(q)) {
            violations += 1;
        }
    }
    Ok((violations == 0, format!("{violations} violations over {laws} laws")))
}

/// A short chain run: robust agent at zero radius against plain IQN.
pub fn zero_radius_reduction() -> Result<(bool, String)> {
    let mut cfg = ExperimentConfig::new(Task::Chain, AgentKind::Rqiqn);
    cfg.total_steps = 600;
    cfg.eval_period = 200;
    cfg.eval_episodes = 5;
    cfg.probe_fractions = 19;
    cfg.agent_config = AgentConfig {
        hidden_width: 16,
        embedding_dim: 8,
        batch_size: 16,
        train_start: 50,
        sync_period: 100,
        robust: RobustConfig {
            epsilon0: 0.0,
            ..Default::default()
        },
        ..Default::default()
    };
    let iqn = ExperimentConfig {
        agent: AgentKind::Iqn,
        ..cfg.clone()
    };
    let a = train_seed(&cfg, 3, None)?;
    let b = train_seed(&iqn, 3, None)?;
    let bits = |r: &super::MetricsRecord| {
        let mut v = vec![r.step, r.loss.map_or(0, f64::to_bits), r.eval_return_mean.to_bits()];
        v.extend(r.probe_state_std.iter().map(|x| x.to_bits()));
        v
    };
    let same_metrics = a.records.iter().map(bits).eq(b.records.iter().map(bits));
    let same_params = a.agent.snapshot().online == b.agent.snapshot().online;
    Ok((
        same_metrics && same_params,
        format!("metrics identical: {same_metrics}, parameters identical: {same_params}"),
    ))
}

/// Worst relative error `‖g − g_fd‖∞ / max(‖g‖∞, ‖g_fd‖∞)` between tape
/// gradients and central differences, over random quantile networks with
/// loss `Σ w ⊙ Z²`.
pub fn gradient_check(networks: usize, seed: u64) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..networks {
        let d = rng.random_range(1..=5);
        let a = rng.random_range(1..=4);
        let w = rng.random_range(2..=8);
        let emb = rng.random_range(2..=6);
        let (b, n) = (rng.random_range(1..=3), rng.random_range(1..=3));
        let mut net = QuantileNetwork::new(d, a, w, emb, &mut rng)?;
        let obs = Tensor::matrix(b, d, (0..b * d).map(|_| rng.random_range(-1.0..1.0)).collect())?;
        let taus: Vec<f64> = (0..b * n).map(|_| rng.random_range(0.05..0.95)).collect();
        let weights: Vec<f64> = (0..b * n * a).map(|_| rng.random_range(-1.0..1.0)).collect();

        let mut tape = Tape::new();
        let vars = net.bind(&mut tape, true);
        let out = net.forward(&mut tape, &vars, &obs, &taus, n)?;
        let sq = tape.hadamard(out, out)?;
        let loss = tape.dot_const(sq, weights.clone())?;
        let mut grads = tape.backward(loss)?;
        let analytic: Vec<f64> = vars
            .iter()
            .flat_map(|v| grads.take(*v).expect("tracked").into_data())
            .collect();

        let eval = |net: &QuantileNetwork| -> Result<f64> {
            let q = net.quantiles(&obs, &taus, n)?;
            Ok(q.data().iter().zip(&weights).map(|(z, w)| w * z * z).sum())
        };
        let h = 1e-5;
        let mut numeric = Vec::with_capacity(analytic.len());
        let shapes: Vec<usize> = net.params().iter().map(|p| p.value.len()).collect();
        for (pi, len) in shapes.into_iter().enumerate() {
            for k in 0..len {
                let orig = net.params()[pi].value.data()[k];
                net.params_mut()[pi].value.data_mut()[k] = orig + h;
                let up = eval(&net)?;
                net.params_mut()[pi].value.data_mut()[k] = orig - h;
                let down = eval(&net)?;
                net.params_mut()[pi].value.data_mut()[k] = orig;
                numeric.push((up - down) / (2.0 * h));
            }
        }
        let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(x, y)| x - y).collect();
        let scale = inf(&analytic).max(inf(&numeric)).max(1e-12);
        worst = worst.max(inf(&diff) / scale);
    }
    Ok((worst < 1e-4, format!("max relative error {worst:.2e} over {networks} networks")))
}

pub fn schedule() -> (bool, String) {
    let cfg = RobustConfig {
        epsilon0: 1.0,
        sharpness: 1.2e-6,
        midpoint: 3.75e6,
        ..Default::default()
    };
    let start = epsilon_schedule(0.0, &cfg);
    let half = epsilon_schedule(cfg.midpoint, &cfg) == cfg.epsilon0 / 2.0;
    let steps: Vec<f64> = (0..=200).map(|i| i as f64 * 5e4).collect();
    let vals: Vec<f64> = steps.iter().map(|&t| epsilon_schedule(t, &cfg)).collect();
    let decreasing = vals.windows(2).all(|w| w[1] < w[0]);
    let ok = half && decreasing && (start - 0.98901).abs() <= 1e-5;
    (ok, format!("eps(0) = {start:.6}, half at midpoint: {half}, strictly decreasing: {decreasing}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_checks_pass() {
        assert!(correction_properties().0);
        assert!(schedule().0);
        assert!(coverage(200, 1).unwrap().0);
        assert!(dro_equivalence(10, 2).unwrap().0);
        assert!(gradient_check(10, 3).unwrap().0);
    }
}
