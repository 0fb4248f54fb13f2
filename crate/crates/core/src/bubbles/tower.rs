use serde::{Deserialize, Serialize};

use super::partition::Partition;
use crate::error::{invalid, Result};

/// Full description of a tower problem on `B_R \ B_ε`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerConfig {
    pub r_outer: f64,
    pub eps: f64,
    pub partition: Partition,
    /// Coupling strength; competitive means `beta < 0`. Zero is accepted for
    /// decoupled reference runs.
    pub beta: f64,
    pub mu: Vec<f64>,
    /// Rate coefficients `d_1..d_k`.
    pub d: Vec<f64>,
    /// Box bound: `eta < d_j < 1/eta`.
    pub eta: f64,
}

/// Concentration scales of a configuration plus the separation diagnostics
/// `ε/δ_j` and `δ_{j+1}/δ_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSchedule {
    pub deltas: Vec<f64>,
    pub eps_over_delta: Vec<f64>,
    pub consecutive_ratios: Vec<f64>,
}

impl RateSchedule {
    pub fn is_separated(&self) -> bool {
        self.eps_over_delta.iter().all(|&x| x < 1.0) && self.consecutive_ratios.iter().all(|&x| x < 1.0)
    }
}

/// `ε^{j/(k+1)} (log 1/ε)^{1/2 − j/(k+1)}` for `j = 1..=k`.
pub fn rate_factors(eps: f64, k: usize) -> Result<Vec<f64>> {
    if !(eps > 0.0 && eps < 1.0) {
        return invalid(format!("rate schedule needs 0 < eps < 1, got {eps:e}"));
    }
    let log_inv = (1.0 / eps).ln();
    let kp1 = (k + 1) as f64;
    Ok((1..=k)
        .map(|j| {
            let t = j as f64 / kp1;
            eps.powf(t) * log_inv.powf(0.5 - t)
        })
        .collect())
}

/// `δ_j = d_j ε^{j/(k+1)} (log 1/ε)^{1/2 − j/(k+1)}`.
pub fn schedule(eps: f64, d: &[f64]) -> Result<RateSchedule> {
    let factors = rate_factors(eps, d.len())?;
    let deltas: Vec<f64> = factors.iter().zip(d).map(|(f, d)| f * d).collect();
    let eps_over_delta = deltas.iter().map(|dl| eps / dl).collect();
    let consecutive_ratios = deltas.windows(2).map(|w| w[1] / w[0]).collect();
    Ok(RateSchedule {
        deltas,
        eps_over_delta,
        consecutive_ratios,
    })
}

pub fn rate_schedule(cfg: &TowerConfig) -> Result<RateSchedule> {
    schedule(cfg.eps, &cfg.d)
}

impl TowerConfig {
    /// Builds and validates a configuration.
    pub fn new(
        r_outer: f64,
        eps: f64,
        partition: Partition,
        beta: f64,
        mu: Vec<f64>,
        d: Vec<f64>,
        eta: f64,
    ) -> Result<Self> {
        let cfg = Self {
            r_outer,
            eps,
            partition,
            beta,
            mu,
            d,
            eta,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn k(&self) -> usize {
        self.partition.k
    }

    pub fn m(&self) -> usize {
        self.partition.m()
    }

    pub fn validate(&self) -> Result<()> {
        self.partition.validate()?;
        if !(self.r_outer > 0.0 && self.r_outer.is_finite()) {
            return invalid(format!("R must be positive, got {}", self.r_outer));
        }
        if !(self.eps > 0.0 && self.eps < self.r_outer) {
            return invalid(format!("need 0 < eps < R, got eps={:e}", self.eps));
        }
        if !(self.beta <= 0.0) {
            return invalid(format!("coupling must be competitive (beta <= 0), got {}", self.beta));
        }
        if self.mu.len() != self.m() || self.mu.iter().any(|&x| !(x > 0.0)) {
            return invalid(format!("need {} positive mu values, got {:?}", self.m(), self.mu));
        }
        if self.d.len() != self.k() {
            return invalid(format!("need {} rate coefficients, got {}", self.k(), self.d.len()));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return invalid(format!("eta must lie in (0, 1), got {}", self.eta));
        }
        if let Some(d) = self.d.iter().find(|&&d| !(d > self.eta && d < 1.0 / self.eta)) {
            return invalid(format!("rate coefficient {d} outside X_eta for eta={}", self.eta));
        }
        let s = rate_schedule(self)?;
        let k = self.k();
        if !(s.eps_over_delta[k - 1] < 1.0 && s.deltas[0] / self.r_outer < 1.0) {
            return invalid(format!(
                "scales not separated from the boundary: eps/delta_k={:.3e}, delta_1/R={:.3e}",
                s.eps_over_delta[k - 1],
                s.deltas[0] / self.r_outer
            ));
        }
        Ok(())
    }

    /// Same problem at a different hole radius.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        let mut c = self.clone();
        c.eps = eps;
        c.validate()?;
        Ok(c)
    }

    pub fn with_d(&self, d: Vec<f64>) -> Result<Self> {
        let mut c = self.clone();
        c.d = d;
        c.validate()?;
        Ok(c)
    }
}
