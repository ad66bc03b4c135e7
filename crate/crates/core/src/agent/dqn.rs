//! Scalar one-step TD baseline: `Q(s, a) → r + γ(1 − done)·max_a' Q_target(s', a')`
//! under a Huber penalty.

use super::config::AgentConfig;
use super::iqn::argmax;
use super::network::stack_rows;
use super::replay::Transition;
use crate::autodiff::{Mlp, Parameters, Tape, Tensor};
use crate::error::{Error, Result};
use crate::loss::huber_kernel;

/// `Q(s, ·)` for a batch of observations, `[B, A]`.
pub fn q_values(net: &Mlp, observations: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let vars = net.bind(&mut tape, false);
    let x = tape.constant(observations.clone());
    let out = net.forward(&mut tape, &vars, x)?;
    Ok(tape.value(out).clone())
}

pub fn greedy_q_action(net: &Mlp, observation: &[f64]) -> Result<usize> {
    let q = q_values(net, &stack_rows([observation])?)?;
    Ok(argmax(q.row(0)))
}

/// Bootstrapped targets, one per transition.
pub fn dqn_targets(batch: &[&Transition], target: &Mlp, gamma: f64) -> Result<Vec<f64>> {
    if batch.is_empty() {
        return Err(Error::Empty("TD batch".into()));
    }
    let next = q_values(target, &stack_rows(batch.iter().map(|t| t.next_state.as_slice()))?)?;
    batch
        .iter()
        .enumerate()
        .map(|(b, t)| {
            if t.done {
                return Ok(t.reward);
            }
            let row = next.row(b);
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("target Q of transition {b}")));
            }
            Ok(t.reward + gamma * row[argmax(row)])
        })
        .collect()
}

/// Mean Huber loss and gradients for the online parameters.
pub fn dqn_loss_and_grads(
    batch: &[&Transition],
    online: &Mlp,
    target: &Mlp,
    cfg: &AgentConfig,
) -> Result<(f64, Vec<Tensor>)> {
    let targets = dqn_targets(batch, target, cfg.gamma)?;
    let kappa = cfg.loss.kappa;
    let mut tape = Tape::new();
    let vars = online.bind(&mut tape, true);
    let x = tape.constant(stack_rows(batch.iter().map(|t| t.state.as_slice()))?);
    let q = online.forward(&mut tape, &vars, x)?;
    let q_taken = tape.gather(q, batch.iter().map(|t| t.action).collect())?;
    let b = batch.len() as f64;
    let mut loss = 0.0;
    let mut weights = Vec::with_capacity(batch.len());
    for (i, (&q, &y)) in tape.value(q_taken).data().iter().zip(&targets).enumerate() {
        if !q.is_finite() {
            return Err(Error::NonFinite(format!("online Q of transition {i}")));
        }
        let u = y - q;
        loss += huber_kernel(u, kappa)? / b;
        // ∂H/∂q = −clip(u, −κ, κ)
        weights.push(-u.clamp(-kappa, kappa) / b);
    }
    let surrogate = tape.dot_const(q_taken, weights)?;
    let mut grads = tape.backward(surrogate)?;
    let grads = vars
        .iter()
        .map(|v| grads.take(*v).expect("online parameters are tracked"))
        .collect();
    Ok((loss, grads))
}

pub fn dqn_baseline(batch: &[&Transition], online: &Mlp, target: &Mlp, cfg: &AgentConfig) -> Result<f64> {
    Ok(dqn_loss_and_grads(batch, online, target, cfg)?.0)
}
