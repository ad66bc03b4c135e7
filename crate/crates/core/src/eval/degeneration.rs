//! Spread of learned return quantiles on the chain versus the true law.

use serde::{Deserialize, Serialize};

use crate::agent::{stack_rows, QuantileFunction};
use crate::autodiff::Tensor;
use crate::env::{true_return_quantiles, true_return_std, ChainConfig, ChainEnv, CHAIN_STATES};
use crate::error::{Error, Result};

/// Non-terminal chain states.
pub const PROBE_STATES: [usize; 3] = [0, 1, 2];

/// Midpoints `(i + ½)/m`, `i = 0..m`.
pub fn probe_grid(m: usize) -> Vec<f64> {
    (0..m).map(|i| (i as f64 + 0.5) / m as f64).collect()
}

/// Population standard deviation.
pub fn population_std(values: &[f64]) -> f64 {
    if values.is_empty() || values.iter().all(|v| *v == values[0]) {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub state: usize,
    /// Std of `Z_τ(s, 0)` over the probe grid.
    pub learned_std: f64,
    /// Std of the true quantile function over the same grid.
    pub grid_true_std: f64,
    /// Std of the true return law, `γ^(2−s)·√Var(R)`.
    pub true_std: f64,
    /// `|learned_std − grid_true_std|`.
    pub gap: f64,
    /// `|learned_std − true_std|`.
    pub true_gap: f64,
    pub learned_quantiles: Vec<f64>,
    pub true_quantiles: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegenerationReport {
    pub taus: Vec<f64>,
    pub probes: Vec<ProbeReport>,
}

impl DegenerationReport {
    pub fn probe(&self, state: usize) -> Option<&ProbeReport> {
        self.probes.iter().find(|p| p.state == state)
    }
}

pub fn degeneration_metrics(
    net: &impl QuantileFunction,
    cfg: &ChainConfig,
    taus: &[f64],
) -> Result<DegenerationReport> {
    if taus.is_empty() {
        return Err(Error::Empty("probe grid".into()));
    }
    let mut probes = Vec::with_capacity(PROBE_STATES.len());
    for state in PROBE_STATES {
        let obs = stack_rows([ChainEnv::one_hot(state).as_slice()])?;
        let q = net.quantiles(&obs, taus, taus.len())?;
        let learned: Vec<f64> = (0..taus.len()).map(|r| q.row(r)[0]).collect();
        let truth = true_return_quantiles(cfg, state, taus)?;
        let learned_std = population_std(&learned);
        let grid_true_std = population_std(&truth);
        let true_std = true_return_std(cfg, state)?;
        probes.push(ProbeReport {
            state,
            learned_std,
            grid_true_std,
            true_std,
            gap: (learned_std - grid_true_std).abs(),
            true_gap: (learned_std - true_std).abs(),
            learned_quantiles: learned,
            true_quantiles: truth,
        });
    }
    Ok(DegenerationReport {
        taus: taus.to_vec(),
        probes,
    })
}

/// The exact chain quantile function dressed up as a network.
#[derive(Clone, Debug)]
pub struct TrueChainQuantiles {
    pub cfg: ChainConfig,
}

impl QuantileFunction for TrueChainQuantiles {
    fn action_count(&self) -> usize {
        1
    }

    fn quantiles(&self, observations: &Tensor, taus: &[f64], n: usize) -> Result<Tensor> {
        let (rows, _) = observations
            .dims2()
            .ok_or_else(|| Error::Shape("observations must be [B, d]".into()))?;
        let mut out = Vec::with_capacity(rows * n);
        for b in 0..rows {
            let state = observations
                .row(b)
                .iter()
                .position(|v| *v == 1.0)
                .unwrap_or(CHAIN_STATES - 1);
            if state == CHAIN_STATES - 1 {
                out.extend(std::iter::repeat_n(0.0, n));
            } else {
                out.extend(true_return_quantiles(&self.cfg, state, &taus[b * n..(b + 1) * n])?);
            }
        }
        Tensor::matrix(rows * n, 1, out)
    }
}
