//! Robust quantile TD learning.
//!
//! For a transition `(s, a, r, s')`, fractions `τ̃_k ~ β` pick the greedy next
//! action `a*` by the mean of `Z_τ̃(s', ·)`; fresh uniform `τ_i`, `τ'_j` then give
//!
//! ```text
//! δ̃_ij = r + γ·Z_{τ'_j}(s', a*) + Δ(τ_i; ε_t) − Z_{τ_i}(s, a)
//! ```
//!
//! and the loss is `(1/N')·Σ_i Σ_j ρ_{τ_i}(δ̃_ij)`, averaged over the batch.
//! Without a robust config the correction term is dropped entirely, which is
//! plain IQN.

use rand::Rng;

use super::config::AgentConfig;
use super::network::{stack_rows, QuantileFunction, QuantileNetwork};
use super::replay::Transition;
use crate::autodiff::{Parameters, Tape, Tensor};
use crate::env::ContextFeature;
use crate::error::{Error, Result};
use crate::loss::{aggregate_loss_with_grad, TdErrorMatrix};
use crate::robust::{distort_fraction, sample_fraction, DistortionConfig, RobustConfig};

/// Everything besides the networks and the batch that shapes the robust TD errors.
#[derive(Clone, Copy, Debug)]
pub struct TdSpec<'a> {
    pub cfg: &'a AgentConfig,
    /// `None` drops the correction (IQN).
    pub robust: Option<&'a RobustConfig>,
    pub context: Option<ContextFeature>,
    pub step: u64,
}

impl TdSpec<'_> {
    pub fn epsilon(&self) -> f64 {
        self.robust.map_or(0.0, |r| r.epsilon_at(self.step))
    }
}

/// Uniform fraction draws for one batch, taken in a fixed order: action
/// selection (`B·K`), current (`B·N`), target (`B·N'`).
#[derive(Clone, Debug, PartialEq)]
pub struct FractionDraws {
    pub action: Vec<f64>,
    pub current: Vec<f64>,
    pub target: Vec<f64>,
}

impl FractionDraws {
    pub fn sample(batch: usize, cfg: &AgentConfig, rng: &mut impl Rng) -> Self {
        let mut draw = |n: usize| (0..n).map(|_| sample_fraction(rng)).collect::<Vec<_>>();
        let action = draw(batch * cfg.action_fractions);
        let current = draw(batch * cfg.current_fractions);
        let target = draw(batch * cfg.target_fractions);
        Self {
            action,
            current,
            target,
        }
    }
}

/// Index of the largest value; the lowest index wins ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Greedy actions for a batch from `K` uniform fractions per observation,
/// distorted per row.
pub fn greedy_actions(
    net: &impl QuantileFunction,
    observations: &Tensor,
    uniform_taus: &[f64],
    k: usize,
    distortion: &DistortionConfig,
    contexts: &[Option<f64>],
) -> Result<Vec<usize>> {
    let batch = contexts.len();
    let actions = net.action_count();
    if actions == 1 {
        return Ok(vec![0; batch]);
    }
    let taus = uniform_taus
        .chunks(k)
        .zip(contexts)
        .flat_map(|(row, ctx)| row.iter().map(move |&t| distort_fraction(t, distortion, *ctx)))
        .collect::<Result<Vec<_>>>()?;
    let q = net.quantiles(observations, &taus, k)?;
    let mut out = Vec::with_capacity(batch);
    let mut means = vec![0.0; actions];
    for b in 0..batch {
        means.iter_mut().for_each(|m| *m = 0.0);
        for r in 0..k {
            for (m, v) in means.iter_mut().zip(q.row(b * k + r)) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= k as f64);
        out.push(argmax(&means));
    }
    Ok(out)
}

/// `argmax_a (1/K)·Σ_k Z_{τ̃_k}(s, a)` with `τ̃_k` drawn through the distortion.
pub fn select_action(
    observation: &[f64],
    net: &impl QuantileFunction,
    k: usize,
    distortion: &DistortionConfig,
    context: Option<f64>,
    rng: &mut impl Rng,
) -> Result<usize> {
    if net.action_count() == 1 {
        return Ok(0);
    }
    let taus: Vec<f64> = (0..k).map(|_| sample_fraction(rng)).collect();
    let obs = stack_rows([observation])?;
    Ok(greedy_actions(net, &obs, &taus, k, distortion, &[context])?[0])
}

/// Target-side quantities shared by the matrix and loss computations.
struct TargetSide {
    draws: FractionDraws,
    /// `y_{b,j}`: the bootstrapped target samples.
    targets: Vec<f64>,
}

fn target_side(
    batch: &[&Transition],
    target: &impl QuantileFunction,
    spec: &TdSpec,
    rng: &mut impl Rng,
) -> Result<TargetSide> {
    if batch.is_empty() {
        return Err(Error::Empty("TD batch".into()));
    }
    let cfg = spec.cfg;
    let draws = FractionDraws::sample(batch.len(), cfg, rng);
    let next_obs = stack_rows(batch.iter().map(|t| t.next_state.as_slice()))?;
    let contexts: Vec<Option<f64>> = batch
        .iter()
        .map(|t| spec.context.map(|c| c.read(&t.next_state)))
        .collect();
    let best = greedy_actions(
        target,
        &next_obs,
        &draws.action,
        cfg.action_fractions,
        &cfg.distortion,
        &contexts,
    )?;
    let n_t = cfg.target_fractions;
    let zt = target.quantiles(&next_obs, &draws.target, n_t)?;
    let mut targets = Vec::with_capacity(batch.len() * n_t);
    for (b, t) in batch.iter().enumerate() {
        if !t.reward.is_finite() {
            return Err(Error::NonFinite(format!("reward of transition {b}")));
        }
        for j in 0..n_t {
            let y = if t.done {
                t.reward
            } else {
                let z = zt.row(b * n_t + j)[best[b]];
                if !z.is_finite() {
                    return Err(Error::NonFinite(format!("target quantile of transition {b}")));
                }
                t.reward + cfg.gamma * z
            };
            targets.push(y);
        }
    }
    Ok(TargetSide { draws, targets })
}

/// Builds one robust TD matrix per transition from the current quantiles
/// `Z_{τ_i}(s, a)` (`B·N` values) and the target samples (`B·N'` values).
pub fn td_matrices(
    current: &[f64],
    targets: &[f64],
    draws: &FractionDraws,
    spec: &TdSpec,
) -> Result<Vec<TdErrorMatrix>> {
    let n = spec.cfg.current_fractions;
    let n_t = spec.cfg.target_fractions;
    let epsilon = spec.epsilon();
    current
        .chunks(n)
        .zip(targets.chunks(n_t))
        .zip(draws.current.chunks(n).zip(draws.target.chunks(n_t)))
        .enumerate()
        .map(|(b, ((z, y), (taus, target_taus)))| {
            if let Some(bad) = z.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "current quantile {bad} of transition {b}"
                )));
            }
            let mut deltas = Vec::with_capacity(n * n_t);
            for (i, &tau) in taus.iter().enumerate() {
                match spec.robust {
                    Some(r) => {
                        let offset = r.td_offset(tau, epsilon);
                        deltas.extend(y.iter().map(|&yj| (yj + offset) - z[i]));
                    }
                    None => deltas.extend(y.iter().map(|&yj| yj - z[i])),
                }
            }
            TdErrorMatrix::new(deltas, taus.to_vec(), target_taus.to_vec())
        })
        .collect()
}

/// Robust TD matrices for a batch. Target values are computed off-tape.
pub fn compute_robust_td_matrix(
    batch: &[&Transition],
    online: &impl QuantileFunction,
    target: &impl QuantileFunction,
    spec: &TdSpec,
    rng: &mut impl Rng,
) -> Result<Vec<TdErrorMatrix>> {
    let side = target_side(batch, target, spec, rng)?;
    let obs = stack_rows(batch.iter().map(|t| t.state.as_slice()))?;
    let n = spec.cfg.current_fractions;
    let q = online.quantiles(&obs, &side.draws.current, n)?;
    let current: Vec<f64> = (0..batch.len() * n)
        .map(|r| q.row(r)[batch[r / n].action])
        .collect();
    td_matrices(&current, &side.targets, &side.draws, spec)
}

fn batch_loss(matrices: &[TdErrorMatrix], spec: &TdSpec) -> Result<(f64, Vec<f64>)> {
    let b = matrices.len() as f64;
    let n = spec.cfg.current_fractions;
    let mut total = 0.0;
    let mut weights = Vec::with_capacity(matrices.len() * n);
    for m in matrices {
        let (loss, grad) = aggregate_loss_with_grad(m, &spec.cfg.loss)?;
        total += loss;
        // ∂δ_ij/∂Z_i = −1
        weights.extend(grad.chunks(m.cols()).map(|row| -row.iter().sum::<f64>() / b));
    }
    Ok((total / b, weights))
}

/// Batch-mean robust quantile loss.
pub fn rqiqn_loss(
    batch: &[&Transition],
    online: &impl QuantileFunction,
    target: &impl QuantileFunction,
    spec: &TdSpec,
    rng: &mut impl Rng,
) -> Result<f64> {
    let matrices = compute_robust_td_matrix(batch, online, target, spec, rng)?;
    Ok(batch_loss(&matrices, spec)?.0)
}

/// Loss plus gradients for the online parameters, in `params()` order. The
/// target network never enters the tape.
pub fn rqiqn_loss_and_grads(
    batch: &[&Transition],
    online: &QuantileNetwork,
    target: &impl QuantileFunction,
    spec: &TdSpec,
    rng: &mut impl Rng,
) -> Result<(f64, Vec<Tensor>)> {
    let side = target_side(batch, target, spec, rng)?;
    let n = spec.cfg.current_fractions;
    let obs = stack_rows(batch.iter().map(|t| t.state.as_slice()))?;

    let mut tape = Tape::new();
    let vars = online.bind(&mut tape, true);
    let out = online.forward(&mut tape, &vars, &obs, &side.draws.current, n)?;
    let actions: Vec<usize> = (0..batch.len() * n).map(|r| batch[r / n].action).collect();
    let chosen = tape.gather(out, actions)?;
    let current = tape.value(chosen).data().to_vec();

    let matrices = td_matrices(&current, &side.targets, &side.draws, spec)?;
    let (loss, weights) = batch_loss(&matrices, spec)?;
    let surrogate = tape.dot_const(chosen, weights)?;
    let mut grads = tape.backward(surrogate)?;
    let grads = vars
        .iter()
        .map(|v| grads.take(*v).expect("online parameters are tracked"))
        .collect();
    Ok((loss, grads))
}
