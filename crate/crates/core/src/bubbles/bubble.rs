use serde::{Deserialize, Serialize};

use super::constants::{UniversalConstants, ALPHA4};
use crate::error::{invalid, Result};

/// Aubin–Talenti bubble `α₄ δ / (δ² + r²)` centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bubble {
    delta: f64,
}

impl Bubble {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return invalid(format!("bubble needs delta > 0, got {delta}"));
        }
        Ok(Self { delta })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn eval(&self, r: f64) -> f64 {
        let d = self.delta;
        ALPHA4 * d / (d * d + r * r)
    }

    /// Radial derivative `∂U/∂r`.
    pub fn eval_dr(&self, r: f64) -> f64 {
        let d = self.delta;
        let s = d * d + r * r;
        -2.0 * ALPHA4 * d * r / (s * s)
    }

    /// `ψ = ∂U/∂δ = α₄ (r² − δ²)/(δ² + r²)²`.
    pub fn eval_ddelta(&self, r: f64) -> f64 {
        let d = self.delta;
        let s = d * d + r * r;
        ALPHA4 * (r * r - d * d) / (s * s)
    }

    /// `∂ψ/∂r = 2α₄ r (3δ² − r²)/(δ² + r²)³`.
    pub fn eval_ddelta_dr(&self, r: f64) -> f64 {
        let d = self.delta;
        let s = d * d + r * r;
        2.0 * ALPHA4 * r * (3.0 * d * d - r * r) / (s * s * s)
    }

    /// `∂²U/∂δ² = 2α₄ δ (δ² − 3r²)/(δ² + r²)³`.
    pub fn eval_ddelta2(&self, r: f64) -> f64 {
        let d = self.delta;
        let s = d * d + r * r;
        2.0 * ALPHA4 * d * (d * d - 3.0 * r * r) / (s * s * s)
    }
}

/// Coefficients of the radial harmonic `c1 + c2/r²` taking the values `at_inner`
/// at `eps` and `at_outer` at `r_outer`.
fn harmonic_match(at_inner: f64, at_outer: f64, eps: f64, r_outer: f64) -> (f64, f64) {
    let det = eps.powi(-2) - r_outer.powi(-2);
    assert!(det > 0.0, "harmonic matching needs eps < R");
    let c2 = (at_inner - at_outer) / det;
    let c1 = at_outer - c2 / (r_outer * r_outer);
    (c1, c2)
}

fn check_annulus(eps: f64, r_outer: f64) -> Result<()> {
    if !(eps > 0.0 && eps < r_outer && r_outer.is_finite()) {
        return invalid(format!("annulus needs 0 < eps < R, got eps={eps:e}, R={r_outer:e}"));
    }
    Ok(())
}

/// `P_ε U = U − (c1 + c2/r²)`: the bubble with its boundary values on both
/// spheres removed by the exact radial harmonic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedBubble {
    pub bubble: Bubble,
    pub eps: f64,
    pub r_outer: f64,
    pub c1: f64,
    pub c2: f64,
}

impl ProjectedBubble {
    pub fn eval(&self, r: f64) -> f64 {
        self.bubble.eval(r) - self.c1 - self.c2 / (r * r)
    }

    pub fn eval_dr(&self, r: f64) -> f64 {
        self.bubble.eval_dr(r) + 2.0 * self.c2 / (r * r * r)
    }

    /// The harmonic correction `c1 + c2/r²`.
    pub fn correction(&self, r: f64) -> f64 {
        self.c1 + self.c2 / (r * r)
    }
}

pub fn project_bubble(b: Bubble, eps: f64, r_outer: f64) -> Result<ProjectedBubble> {
    check_annulus(eps, r_outer)?;
    let (c1, c2) = harmonic_match(b.eval(eps), b.eval(r_outer), eps, r_outer);
    Ok(ProjectedBubble {
        bubble: b,
        eps,
        r_outer,
        c1,
        c2,
    })
}

/// `P_ε ψ` with `ψ = ∂U/∂δ`, again via an exact harmonic correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedDerivative {
    pub bubble: Bubble,
    pub eps: f64,
    pub r_outer: f64,
    pub c1: f64,
    pub c2: f64,
}

impl ProjectedDerivative {
    pub fn eval(&self, r: f64) -> f64 {
        self.bubble.eval_ddelta(r) - self.c1 - self.c2 / (r * r)
    }

    pub fn eval_dr(&self, r: f64) -> f64 {
        self.bubble.eval_ddelta_dr(r) + 2.0 * self.c2 / (r * r * r)
    }
}

pub fn project_dbubble(b: Bubble, eps: f64, r_outer: f64) -> Result<ProjectedDerivative> {
    check_annulus(eps, r_outer)?;
    let (c1, c2) = harmonic_match(b.eval_ddelta(eps), b.eval_ddelta(r_outer), eps, r_outer);
    Ok(ProjectedDerivative {
        bubble: b,
        eps,
        r_outer,
        c1,
        c2,
    })
}

/// Pointwise remainder `P_ε U − [U − A δ τ(0) − (α₄/δ)(ε/r)²]`, formed from
/// the harmonic correction so that `U` cancels exactly.
fn expansion_remainder(p: &ProjectedBubble, r: f64) -> f64 {
    let delta = p.bubble.delta();
    let c = UniversalConstants::closed_form();
    let regular = c.a * delta * c.robin_ball(p.r_outer);
    let singular = ALPHA4 / delta * (p.eps / r).powi(2);
    -p.correction(r) + regular + singular
}

/// Log-spaced radii in `[2ε, R]` used for the expansion diagnostics.
fn expansion_radii(eps: f64, r_outer: f64) -> impl Iterator<Item = f64> {
    const SAMPLES: usize = 2000;
    let lo = 2.0 * eps;
    let span = (r_outer / lo).ln();
    (0..=SAMPLES).map(move |i| lo * (span * i as f64 / SAMPLES as f64).exp())
}

fn expansion_setup(b: Bubble, eps: f64, r_outer: f64) -> Result<ProjectedBubble> {
    let delta = b.delta();
    if eps / delta >= 1.0 {
        return invalid(format!("expansion needs eps < delta, got eps={eps:e}, delta={delta:e}"));
    }
    if 2.0 * eps >= r_outer {
        return invalid("2 eps must lie inside the domain");
    }
    project_bubble(b, eps, r_outer)
}

/// Largest deviation of `P_ε U` from `U − A δ τ(0) − (α₄/δ)(ε/r)²` over
/// log-spaced radii in `[2ε, R]`.
pub fn projection_expansion_error(b: Bubble, eps: f64, r_outer: f64) -> Result<f64> {
    let p = expansion_setup(b, eps, r_outer)?;
    Ok(expansion_radii(eps, r_outer)
        .map(|r| expansion_remainder(&p, r).abs())
        .fold(0.0, f64::max))
}

/// Smallest constant `C` with `|R(r)| ≤ C δ [ε²(1+εδ⁻³)/r² + δ² + (ε/δ)²]`
/// on the same radii as [`projection_expansion_error`].
pub fn projection_expansion_constant(b: Bubble, eps: f64, r_outer: f64) -> Result<f64> {
    let p = expansion_setup(b, eps, r_outer)?;
    let d = b.delta();
    Ok(expansion_radii(eps, r_outer)
        .map(|r| {
            let envelope = d * (eps * eps * (1.0 + eps / d.powi(3)) / (r * r) + d * d + (eps / d).powi(2));
            expansion_remainder(&p, r).abs() / envelope
        })
        .fold(0.0, f64::max))
}
