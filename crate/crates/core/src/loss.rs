//! Quantile-regression losses and the pairwise TD aggregation.
//!
//! The indicator `1{u<0}` is strict everywhere: a zero residual contributes
//! nothing, and its subgradient is taken from the right (`τ`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Check,
    QuantileHuber,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Huber threshold in return units; only read by the quantile-Huber kind.
    pub kappa: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: LossKind::Check,
            kappa: 1.0,
        }
    }
}

impl LossConfig {
    pub fn check() -> Self {
        Self::default()
    }

    pub fn quantile_huber(kappa: f64) -> Self {
        Self {
            kind: LossKind::QuantileHuber,
            kappa,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == LossKind::QuantileHuber && !(self.kappa > 0.0) {
            return Err(Error::Config(format!(
                "Huber threshold must be positive, got {}",
                self.kappa
            )));
        }
        Ok(())
    }

    /// Per-element loss. Assumes a validated config.
    #[inline]
    pub fn value(&self, u: f64, tau: f64) -> f64 {
        match self.kind {
            LossKind::Check => check_loss(u, tau),
            LossKind::QuantileHuber => asym_weight(u, tau) * huber_unchecked(u, self.kappa) / self.kappa,
        }
    }

    /// Per-element derivative in `u`. Assumes a validated config.
    #[inline]
    pub fn derivative(&self, u: f64, tau: f64) -> f64 {
        match self.kind {
            LossKind::Check => check_loss_derivative(u, tau),
            LossKind::QuantileHuber => {
                let k = self.kappa;
                let h = if u.abs() <= k { u } else { k * u.signum() };
                asym_weight(u, tau) * h / k
            }
        }
    }
}

#[inline]
fn asym_weight(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        1.0 - tau
    } else {
        tau
    }
}

/// `ρ_τ(u) = u(τ − 1{u<0})`.
#[inline]
pub fn check_loss(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        (tau - 1.0) * u
    } else {
        tau * u
    }
}

#[inline]
pub fn check_loss_derivative(u: f64, tau: f64) -> f64 {
    if u < 0.0 {
        tau - 1.0
    } else {
        tau
    }
}

#[inline]
fn huber_unchecked(u: f64, kappa: f64) -> f64 {
    let a = u.abs();
    if a <= kappa {
        0.5 * u * u
    } else {
        kappa * (a - 0.5 * kappa)
    }
}

pub fn huber_kernel(u: f64, kappa: f64) -> Result<f64> {
    LossConfig::quantile_huber(kappa).validate()?;
    Ok(huber_unchecked(u, kappa))
}

/// `|τ − 1{u<0}|·H_κ(u)/κ`.
pub fn quantile_huber(u: f64, tau: f64, kappa: f64) -> Result<f64> {
    let cfg = LossConfig::quantile_huber(kappa);
    cfg.validate()?;
    Ok(cfg.value(u, tau))
}

/// Pairwise residuals `δ_ij` for `N` current and `N'` target fractions, row-major in `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct TdErrorMatrix {
    deltas: Vec<f64>,
    taus: Vec<f64>,
    target_taus: Vec<f64>,
}

impl TdErrorMatrix {
    pub fn new(deltas: Vec<f64>, taus: Vec<f64>, target_taus: Vec<f64>) -> Result<Self> {
        if taus.is_empty() || target_taus.is_empty() {
            return Err(Error::Empty("TD error matrix needs N, N' >= 1".into()));
        }
        if deltas.len() != taus.len() * target_taus.len() {
            return Err(Error::Shape(format!(
                "{} residuals for a {}x{} matrix",
                deltas.len(),
                taus.len(),
                target_taus.len()
            )));
        }
        if let Some(t) = taus
            .iter()
            .chain(&target_taus)
            .find(|t| !(**t > 0.0 && **t < 1.0))
        {
            return Err(Error::Domain(format!("fraction {t} outside (0, 1)")));
        }
        Ok(Self {
            deltas,
            taus,
            target_taus,
        })
    }

    pub fn rows(&self) -> usize {
        self.taus.len()
    }

    pub fn cols(&self) -> usize {
        self.target_taus.len()
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn target_taus(&self) -> &[f64] {
        &self.target_taus
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.deltas[i * self.cols() + j]
    }
}

/// `(1/N')·Σ_i Σ_j ρ_{τ_i}(δ_ij)`.
pub fn aggregate_loss(m: &TdErrorMatrix, cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    let cols = m.cols();
    let total: f64 = m
        .deltas
        .chunks_exact(cols)
        .zip(&m.taus)
        .map(|(row, &tau)| row.iter().map(|&u| cfg.value(u, tau)).sum::<f64>())
        .sum();
    Ok(total / cols as f64)
}

/// Loss together with `∂L/∂δ_ij` (same layout as the residuals).
pub fn aggregate_loss_with_grad(m: &TdErrorMatrix, cfg: &LossConfig) -> Result<(f64, Vec<f64>)> {
    let loss = aggregate_loss(m, cfg)?;
    let scale = 1.0 / m.cols() as f64;
    let grad = m
        .deltas
        .chunks_exact(m.cols())
        .zip(&m.taus)
        .flat_map(|(row, &tau)| row.iter().map(move |&u| cfg.derivative(u, tau) * scale))
        .collect();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TOL: f64 = 1e-12;

    #[test]
    fn check_loss_examples() {
        assert!((check_loss(1.0, 0.5) - 0.5).abs() < TOL);
        assert!((check_loss(-1.0, 0.25) - 0.75).abs() < TOL);
        for tau in [0.1, 0.5, 0.9] {
            assert_eq!(check_loss(0.0, tau), 0.0);
        }
        assert_eq!(check_loss_derivative(0.0, 0.3), 0.3);
    }

    #[test]
    fn huber_examples() {
        assert!((huber_kernel(0.5, 1.0).unwrap() - 0.125).abs() < TOL);
        assert!((huber_kernel(2.0, 1.0).unwrap() - 1.5).abs() < TOL);
        let k = 0.7;
        assert!((huber_kernel(-k, k).unwrap() - 0.5 * k * k).abs() < TOL);
        assert!(matches!(huber_kernel(1.0, 0.0), Err(Error::Config(_))));
        assert!(huber_kernel(1.0, -1.0).is_err());
    }

    #[test]
    fn quantile_huber_examples() {
        assert!((quantile_huber(2.0, 0.5, 1.0).unwrap() - 0.75).abs() < TOL);
        assert!((quantile_huber(-2.0, 0.25, 1.0).unwrap() - 1.125).abs() < TOL);
        assert!((quantile_huber(0.5, 0.9, 1.0).unwrap() - 0.1125).abs() < TOL);
    }

    #[test]
    fn aggregate_examples() {
        let m = TdErrorMatrix::new(vec![0.9], vec![0.5], vec![0.5]).unwrap();
        assert!((aggregate_loss(&m, &LossConfig::check()).unwrap() - 0.45).abs() < TOL);

        let m = TdErrorMatrix::new(vec![0.0; 6], vec![0.2, 0.7], vec![0.1, 0.5, 0.9]).unwrap();
        assert_eq!(aggregate_loss(&m, &LossConfig::check()).unwrap(), 0.0);

        let m = TdErrorMatrix::new(vec![1.0; 4], vec![0.25, 0.75], vec![0.3, 0.6]).unwrap();
        assert!((aggregate_loss(&m, &LossConfig::check()).unwrap() - 1.0).abs() < TOL);
    }

    #[test]
    fn matrix_validation() {
        assert!(matches!(
            TdErrorMatrix::new(vec![], vec![], vec![0.5]),
            Err(Error::Empty(_))
        ));
        assert!(TdErrorMatrix::new(vec![0.0; 3], vec![0.5], vec![0.5]).is_err());
        assert!(TdErrorMatrix::new(vec![0.0], vec![1.0], vec![0.5]).is_err());
        assert!(TdErrorMatrix::new(vec![0.0], vec![0.5], vec![0.0]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let deltas = vec![0.3, -1.7, 2.4, -0.05, 0.8, -3.0];
        let taus = vec![0.15, 0.8];
        let target = vec![0.2, 0.5, 0.9];
        for cfg in [LossConfig::check(), LossConfig::quantile_huber(1.0)] {
            let m = TdErrorMatrix::new(deltas.clone(), taus.clone(), target.clone()).unwrap();
            let (_, grad) = aggregate_loss_with_grad(&m, &cfg).unwrap();
            for k in 0..deltas.len() {
                let h = 1e-6;
                let mut up = deltas.clone();
                up[k] += h;
                let mut down = deltas.clone();
                down[k] -= h;
                let lu = aggregate_loss(&TdErrorMatrix::new(up, taus.clone(), target.clone()).unwrap(), &cfg).unwrap();
                let ld = aggregate_loss(&TdErrorMatrix::new(down, taus.clone(), target.clone()).unwrap(), &cfg).unwrap();
                assert!(((lu - ld) / (2.0 * h) - grad[k]).abs() < 1e-7);
            }
        }
    }

    proptest! {
        #[test]
        fn check_loss_alternate_form(u in -50.0f64..50.0, tau in 0.001f64..0.999) {
            let ind = if u < 0.0 { 1.0 } else { 0.0 };
            let alt = (tau - ind).abs() * u.abs();
            prop_assert!((check_loss(u, tau) - alt).abs() <= 1e-12 * (1.0 + u.abs()));
            prop_assert!(check_loss(u, tau) >= 0.0);
        }

        #[test]
        fn quantile_huber_factors_through_kernel(u in -20.0f64..20.0, tau in 0.001f64..0.999, kappa in 0.01f64..5.0) {
            prop_assume!(u != 0.0);
            let ind = if u < 0.0 { 1.0 } else { 0.0 };
            let lhs = quantile_huber(u, tau, kappa).unwrap() * kappa / (tau - ind).abs();
            let rhs = huber_kernel(u, kappa).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs));
        }

        #[test]
        fn huber_approaches_check(u in -20.0f64..20.0, tau in 0.001f64..0.999) {
            let kappa = 1e-6;
            prop_assume!(u.abs() >= kappa);
            let gap = (quantile_huber(u, tau, kappa).unwrap() - check_loss(u, tau)).abs();
            prop_assert!(gap <= kappa / 2.0 + 1e-12 * u.abs());
        }

        #[test]
        fn check_aggregate_is_homogeneous(
            deltas in proptest::collection::vec(-10.0f64..10.0, 6),
            c in 0.01f64..100.0,
        ) {
            let taus = vec![0.1, 0.6];
            let target = vec![0.3, 0.5, 0.7];
            let cfg = LossConfig::check();
            let base = aggregate_loss(&TdErrorMatrix::new(deltas.clone(), taus.clone(), target.clone()).unwrap(), &cfg).unwrap();
            let scaled: Vec<f64> = deltas.iter().map(|d| d * c).collect();
            let l = aggregate_loss(&TdErrorMatrix::new(scaled, taus, target).unwrap(), &cfg).unwrap();
            prop_assert!((l - c * base).abs() <= 1e-10 * (1.0 + l.abs()));
        }
    }
}
