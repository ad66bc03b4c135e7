//! Closed-form Wasserstein-robust quantile corrections, the radius schedule,
//! and fraction distortions.
//!
//! For a type-`p` ball of radius `ε` around an empirical target law, the
//! robust check-loss minimizer at fraction `τ` is the nominal empirical
//! quantile shifted by
//!
//! ```text
//! Δ_p(τ; ε) = (ε/q)·(τ^q − (1−τ)^q)·c_{τ,p}^{1−q},   1/p + 1/q = 1
//! c_{τ,p}   = (τ^q(1−τ) + τ(1−τ)^q)^{1/q}            (finite p)
//!           = 2τ(1−τ)                                (p = ∞)
//! ```
//!
//! `p = ∞` collapses to `ε(2τ−1)`. The raw `p = 2` form diverges at the
//! endpoints, so training uses the bounded surrogate
//! `(ε/2)(1−2τ)/√(τ² + (1−τ)²)`, which enters the TD residual on the
//! prediction side (subtracted), giving the same spread-widening direction
//! as the raw form.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fractions are drawn from `(FRACTION_MARGIN, 1 − FRACTION_MARGIN)`.
pub const FRACTION_MARGIN: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WassersteinOrder {
    Two,
    Infinity,
}

impl WassersteinOrder {
    pub fn p(self) -> f64 {
        match self {
            WassersteinOrder::Two => 2.0,
            WassersteinOrder::Infinity => f64::INFINITY,
        }
    }

    /// Conjugate exponent `q` with `1/p + 1/q = 1`.
    pub fn conjugate(self) -> f64 {
        conjugate_exponent(self.p())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionVariant {
    Raw,
    Bounded,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobustConfig {
    pub order: WassersteinOrder,
    /// Initial radius `ε₀` in return units.
    pub epsilon0: f64,
    /// Decay sharpness `k` (per step).
    pub sharpness: f64,
    /// Decay midpoint `t₀` (steps).
    pub midpoint: f64,
    pub variant: CorrectionVariant,
}

impl Default for RobustConfig {
    fn default() -> Self {
        Self {
            order: WassersteinOrder::Two,
            epsilon0: 1.0,
            sharpness: 1.2e-6,
            midpoint: 5.9e5,
            variant: CorrectionVariant::Bounded,
        }
    }
}

impl RobustConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon0 >= 0.0 && self.epsilon0.is_finite()) {
            return Err(Error::Config(format!("epsilon0 must be >= 0, got {}", self.epsilon0)));
        }
        if !(self.sharpness > 0.0 && self.sharpness.is_finite()) {
            return Err(Error::Config(format!("sharpness must be > 0, got {}", self.sharpness)));
        }
        if !(self.midpoint >= 0.0 && self.midpoint.is_finite()) {
            return Err(Error::Config(format!("midpoint must be >= 0, got {}", self.midpoint)));
        }
        Ok(())
    }

    pub fn epsilon_at(&self, step: u64) -> f64 {
        epsilon_schedule(step as f64, self)
    }

    /// The additive offset for fraction `τ` inside the robust TD residual
    /// `r + γZ' + offset − Z`.
    pub fn td_offset(&self, tau: f64, epsilon: f64) -> f64 {
        match (self.order, self.variant) {
            (WassersteinOrder::Two, CorrectionVariant::Bounded) => -delta_bounded_2(tau, epsilon),
            (order, _) => delta_raw(tau, epsilon, order),
        }
    }
}

/// The ingredients of one robust quantile slot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WassersteinSlot {
    pub tau: f64,
    pub epsilon: f64,
    pub order: WassersteinOrder,
}

impl WassersteinSlot {
    pub fn new(tau: f64, epsilon: f64, order: WassersteinOrder) -> Result<Self> {
        check_open_fraction(tau)?;
        if !(epsilon >= 0.0) {
            return Err(Error::Domain(format!("radius must be >= 0, got {epsilon}")));
        }
        Ok(Self { tau, epsilon, order })
    }

    pub fn conjugate(&self) -> f64 {
        self.order.conjugate()
    }

    pub fn correction(&self) -> f64 {
        delta_raw(self.tau, self.epsilon, self.order)
    }
}

pub fn conjugate_exponent(p: f64) -> f64 {
    if p.is_infinite() {
        1.0
    } else {
        p / (p - 1.0)
    }
}

fn check_open_fraction(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("fraction {tau} outside (0, 1)")))
    }
}

/// `c_{τ,p}` for the two first-class orders.
pub fn c_tau_p(tau: f64, order: WassersteinOrder) -> Result<f64> {
    check_open_fraction(tau)?;
    Ok(c_tau_general(tau, order.p()))
}

/// `c_{τ,p}` for any `p ∈ (1, ∞]`, no domain check.
pub fn c_tau_general(tau: f64, p: f64) -> f64 {
    if p.is_infinite() {
        return 2.0 * tau * (1.0 - tau);
    }
    let q = conjugate_exponent(p);
    let s = 1.0 - tau;
    (tau.powf(q) * s + tau * s.powf(q)).powf(1.0 / q)
}

/// Raw correction `Δ_p(τ; ε)` for a first-class order. Finite on `(0, 1)` only
/// when `p = 2`.
pub fn delta_raw(tau: f64, epsilon: f64, order: WassersteinOrder) -> f64 {
    delta_raw_general(tau, epsilon, order.p())
}

/// Raw correction for any `p ∈ (1, ∞]`.
pub fn delta_raw_general(tau: f64, epsilon: f64, p: f64) -> f64 {
    let q = conjugate_exponent(p);
    let s = 1.0 - tau;
    let spread = tau.powf(q) - s.powf(q);
    if spread == 0.0 || epsilon == 0.0 {
        return 0.0;
    }
    epsilon / q * spread * c_tau_general(tau, p).powf(1.0 - q)
}

/// Bounded `p = 2` surrogate, finite on all of `[0, 1]`. Nonincreasing in `τ`.
pub fn delta_bounded_2(tau: f64, epsilon: f64) -> f64 {
    let s = 1.0 - tau;
    let num = s - tau;
    if num == 0.0 || epsilon == 0.0 {
        return 0.0;
    }
    0.5 * epsilon * num / (tau * tau + s * s).sqrt()
}

/// Reverse-logistic radius decay `ε₀ / (1 + exp(k(t − t₀)))`.
pub fn epsilon_schedule(step: f64, cfg: &RobustConfig) -> f64 {
    cfg.epsilon0 / (1.0 + (cfg.sharpness * (step - cfg.midpoint)).exp())
}

/// A uniform fraction from the open interval used for training.
pub fn sample_fraction(rng: &mut impl Rng) -> f64 {
    FRACTION_MARGIN + (1.0 - 2.0 * FRACTION_MARGIN) * rng.random::<f64>()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistortionKind {
    Identity,
    Cvar,
    AdaptiveCvar,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistortionConfig {
    pub kind: DistortionKind,
    /// CVaR level for the fixed kind.
    pub eta: f64,
    /// Obstacle distance at which the adaptive level reaches 1.
    pub safe_distance: f64,
    /// Floor for the adaptive level.
    pub eta_min: f64,
}

impl Default for DistortionConfig {
    fn default() -> Self {
        Self {
            kind: DistortionKind::Identity,
            eta: 1.0,
            safe_distance: 5.0,
            eta_min: 0.25,
        }
    }
}

impl DistortionConfig {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn cvar(eta: f64) -> Self {
        Self {
            kind: DistortionKind::Cvar,
            eta,
            ..Self::default()
        }
    }

    pub fn adaptive(safe_distance: f64, eta_min: f64) -> Self {
        Self {
            kind: DistortionKind::AdaptiveCvar,
            safe_distance,
            eta_min,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::Config(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        if !(self.eta_min > 0.0 && self.eta_min <= 1.0) {
            return Err(Error::Config(format!("eta_min must lie in (0, 1], got {}", self.eta_min)));
        }
        if !(self.safe_distance > 0.0) {
            return Err(Error::Config(format!(
                "safe_distance must be > 0, got {}",
                self.safe_distance
            )));
        }
        Ok(())
    }

    pub fn needs_context(&self) -> bool {
        self.kind == DistortionKind::AdaptiveCvar
    }

    /// The CVaR level in effect, given an optional obstacle distance.
    pub fn level(&self, distance: Option<f64>) -> Result<f64> {
        match self.kind {
            DistortionKind::Identity => Ok(1.0),
            DistortionKind::Cvar => Ok(self.eta),
            DistortionKind::AdaptiveCvar => {
                let d = distance.ok_or_else(|| {
                    Error::Domain("adaptive CVaR needs a nearest-obstacle distance".into())
                })?;
                Ok((d / self.safe_distance).clamp(self.eta_min, 1.0))
            }
        }
    }
}

/// Maps a uniform fraction through the configured distortion.
pub fn distort_fraction(tau: f64, cfg: &DistortionConfig, distance: Option<f64>) -> Result<f64> {
    Ok(cfg.level(distance)? * tau)
}
