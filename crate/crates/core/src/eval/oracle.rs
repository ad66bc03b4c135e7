//! Brute-force references for the empirical quantile slot and its
//! ∞-Wasserstein robust counterpart.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::check_loss;
use crate::robust::WassersteinOrder;

/// Uniform discrete law over bootstrapped target samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalTargetLaw {
    samples: Vec<f64>,
}

impl EmpiricalTargetLaw {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("empirical law needs at least one sample".into()));
        }
        if let Some(i) = samples.iter().position(|y| !y.is_finite()) {
            return Err(Error::NonFinite(format!("sample {i} of empirical law")));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// `P(Y < q)`.
    pub fn prob_below(&self, q: f64) -> f64 {
        self.samples.iter().filter(|y| **y < q).count() as f64 / self.len() as f64
    }

    /// `P(Y ≤ q)`.
    pub fn prob_at_or_below(&self, q: f64) -> f64 {
        self.samples.iter().filter(|y| **y <= q).count() as f64 / self.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `(1/N')·Σ_j ρ_τ(y_j − q)`.
    pub fn check_risk(&self, q: f64, tau: f64) -> f64 {
        self.samples.iter().map(|y| check_loss(y - q, tau)).sum::<f64>() / self.len() as f64
    }
}

fn check_fraction(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("fraction must lie in (0, 1), got {tau}")))
    }
}

/// Smallest minimizer of the empirical check risk: the order statistic
/// `y_(k)` with the least `k` such that `k/N' ≥ τ`.
pub fn empirical_quantile_slot(law: &EmpiricalTargetLaw, tau: f64) -> Result<f64> {
    check_fraction(tau)?;
    let mut sorted = law.samples.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let k = (1..=n)
        .find(|&k| k as f64 / n as f64 >= tau)
        .unwrap_or(n);
    Ok(sorted[k - 1])
}

/// Worst-case expected check loss over an ∞-Wasserstein ball: every atom may
/// move independently by at most `ε`, and the convex per-atom loss peaks at
/// an end of its interval.
pub fn dro_worst_case_loss(
    law: &EmpiricalTargetLaw,
    q: f64,
    tau: f64,
    epsilon: f64,
    order: WassersteinOrder,
) -> Result<f64> {
    check_fraction(tau)?;
    if !(epsilon >= 0.0) {
        return Err(Error::Domain(format!("radius must be >= 0, got {epsilon}")));
    }
    if order != WassersteinOrder::Infinity {
        return Err(Error::Unsupported(
            "the brute-force robust loss exists only for the infinity order".into(),
        ));
    }
    let total: f64 = law
        .samples
        .iter()
        .map(|y| {
            check_loss(y - epsilon - q, tau).max(check_loss(y + epsilon - q, tau))
        })
        .sum();
    Ok(total / law.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DroOracleConfig {
    /// Grid spacing in `q`.
    pub resolution: f64,
    /// Extra room beyond `[min(y) − ε, max(y) + ε]` on both sides.
    pub margin: f64,
    /// Largest acceptable error of the grid minimizer.
    pub tolerance: f64,
    pub order: WassersteinOrder,
}

impl Default for DroOracleConfig {
    fn default() -> Self {
        Self {
            resolution: 1e-3,
            margin: 1.0,
            tolerance: 1e-3,
            order: WassersteinOrder::Infinity,
        }
    }
}

impl DroOracleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(Error::Config(format!("grid resolution must be > 0, got {}", self.resolution)));
        }
        if !(self.margin >= 0.0) {
            return Err(Error::Config(format!("grid margin must be >= 0, got {}", self.margin)));
        }
        if self.resolution > self.tolerance {
            return Err(Error::Config(format!(
                "grid resolution {} is coarser than the requested tolerance {}",
                self.resolution, self.tolerance
            )));
        }
        Ok(())
    }
}

/// Grid search for the smallest minimizer of [`dro_worst_case_loss`] over `q`.
pub fn dro_robust_minimizer_bruteforce(
    law: &EmpiricalTargetLaw,
    tau: f64,
    epsilon: f64,
    cfg: &DroOracleConfig,
) -> Result<f64> {
    cfg.validate()?;
    let lo = law.min() - epsilon - cfg.margin;
    let hi = law.max() + epsilon + cfg.margin;
    let points = ((hi - lo) / cfg.resolution).ceil() as usize;
    let losses = (0..=points)
        .map(|i| {
            let q = lo + i as f64 * cfg.resolution;
            dro_worst_case_loss(law, q, tau, epsilon, cfg.order).map(|l| (q, l))
        })
        .collect::<Result<Vec<_>>>()?;
    let best = losses.iter().map(|(_, l)| *l).fold(f64::INFINITY, f64::min);
    let slack = 1e-12 * (1.0 + best.abs());
    let (q, _) = losses
        .into_iter()
        .find(|(_, l)| *l <= best + slack)
        .expect("grid is nonempty");
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law(v: &[f64]) -> EmpiricalTargetLaw {
        EmpiricalTargetLaw::new(v.to_vec()).unwrap()
    }

    #[test]
    fn slot_examples() {
        assert_eq!(empirical_quantile_slot(&law(&[1.0, 2.0, 3.0]), 0.5).unwrap(), 2.0);
        assert_eq!(empirical_quantile_slot(&law(&[3.0, 1.0, 2.0]), 0.9).unwrap(), 3.0);
        assert_eq!(empirical_quantile_slot(&law(&[0.0, 10.0]), 0.5).unwrap(), 0.0);
        assert!(EmpiricalTargetLaw::new(vec![]).is_err());
        assert!(empirical_quantile_slot(&law(&[1.0]), 1.0).is_err());
    }

    #[test]
    fn slot_minimizes_the_check_risk() {
        let l = law(&[0.3, -1.2, 4.0, 2.2, 2.2, 0.0, 7.5]);
        for tau in [0.05, 0.2, 0.5, 0.71, 0.95] {
            let q = empirical_quantile_slot(&l, tau).unwrap();
            let r = l.check_risk(q, tau);
            for y in l.samples() {
                assert!(r <= l.check_risk(*y, tau) + 1e-12);
            }
            assert!(r < l.check_risk(q - 1e-6, tau));
        }
    }

    #[test]
    fn robust_loss_examples() {
        let one = law(&[0.0]);
        let v = dro_worst_case_loss(&one, 0.0, 0.75, 1.0, WassersteinOrder::Infinity).unwrap();
        assert!((v - 0.75).abs() < 1e-15);
        let l = law(&[1.0, -2.0, 0.5]);
        for q in [-3.0, 0.0, 0.7, 4.0] {
            let plain = dro_worst_case_loss(&l, q, 0.3, 0.0, WassersteinOrder::Infinity).unwrap();
            assert_eq!(plain, l.check_risk(q, 0.3));
        }
        assert!(matches!(
            dro_worst_case_loss(&l, 0.0, 0.3, 1.0, WassersteinOrder::Two),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn robust_loss_is_unimodal_and_nested() {
        let l = law(&[1.0, -2.0, 0.5, 3.3]);
        let grid: Vec<f64> = (0..400).map(|i| -6.0 + i as f64 * 0.03).collect();
        let vals: Vec<f64> = grid
            .iter()
            .map(|q| dro_worst_case_loss(&l, *q, 0.35, 0.8, WassersteinOrder::Infinity).unwrap())
            .collect();
        let argmin = vals.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!(vals[..=argmin].windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(vals[argmin..].windows(2).all(|w| w[1] >= w[0] - 1e-12));
        for (q, v) in grid.iter().zip(&vals) {
            assert!(*v >= l.check_risk(*q, 0.35));
        }
    }

    #[test]
    fn minimizer_examples() {
        let cfg = DroOracleConfig::default();
        let q = dro_robust_minimizer_bruteforce(&law(&[0.0]), 0.75, 1.0, &cfg).unwrap();
        assert!((q - 0.5).abs() <= 1e-3, "{q}");
        let l = law(&[1.0, 2.5, -0.3]);
        let q = dro_robust_minimizer_bruteforce(&l, 0.4, 0.0, &cfg).unwrap();
        assert!((q - empirical_quantile_slot(&l, 0.4).unwrap()).abs() <= 1e-3);
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let cfg = DroOracleConfig { resolution: 0.1, ..Default::default() };
        assert!(dro_robust_minimizer_bruteforce(&law(&[0.0]), 0.5, 1.0, &cfg).is_err());
    }
}
