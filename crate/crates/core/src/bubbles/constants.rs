use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::quadrature::{integrate_fn, log_mesh};

/// Normalisation of the bubble, `2√2`.
pub const ALPHA4: f64 = 2.828_427_124_746_190_3;

/// Area of the unit 3-sphere, `2π²`.
pub const SPHERE3_AREA: f64 = 2.0 * PI * PI;

/// `(2|S³|)⁻¹`, the coefficient of the fundamental solution `γ₄/|x|²`.
pub const GAMMA4: f64 = 1.0 / (2.0 * SPHERE3_AREA);

/// Truncation of the whole-space integrals.
const INNER_CUTOFF: f64 = 1e-8;
const OUTER_CUTOFF: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniversalConstants {
    pub alpha4: f64,
    pub sphere3_area: f64,
    pub gamma4: f64,
    /// `∫ U₁₀³` over ℝ⁴.
    pub a: f64,
    /// `∫ U₁₀⁴` over ℝ⁴.
    pub b: f64,
    /// `∫ α₄⁴ / (|y|²(1+|y|²)³)` over ℝ⁴.
    pub gamma: f64,
    /// `α₄⁴ |S³|`, the leading constant of the bubble interaction integral.
    pub interaction_const: f64,
}

impl UniversalConstants {
    /// Analytic values: `A = 8√2π²`, `B = 32π²/3`, `Γ = 32π²`.
    pub fn closed_form() -> Self {
        let pi2 = PI * PI;
        Self {
            alpha4: ALPHA4,
            sphere3_area: SPHERE3_AREA,
            gamma4: GAMMA4,
            a: 8.0 * std::f64::consts::SQRT_2 * pi2,
            b: 32.0 * pi2 / 3.0,
            gamma: 32.0 * pi2,
            interaction_const: ALPHA4.powi(4) * SPHERE3_AREA,
        }
    }

    /// Robin function of the ball `B_R` at its centre.
    pub fn robin_ball(&self, r_outer: f64) -> f64 {
        self.gamma4 / (r_outer * r_outer)
    }
}

/// Evaluates `A`, `B`, `Γ` by radial quadrature on `[1e-8, 1e6]`, adding the
/// power-law head and tail contributions analytically.
pub fn compute_constants() -> UniversalConstants {
    let mesh = log_mesh(INNER_CUTOFF, OUTER_CUTOFF, 64).expect("valid cutoffs");
    let nodes = mesh.nodes();
    let (a0, a1) = (INNER_CUTOFF, OUTER_CUTOFF);
    let s3 = SPHERE3_AREA;
    let al = ALPHA4;

    // head: integrand ~ f(0) r³, tail: integrand ~ c r^{-p}
    let a = integrate_fn(nodes, |r| al.powi(3) / (1.0 + r * r).powi(3))
        + s3 * al.powi(3) * (a0.powi(4) / 4.0 + 1.0 / (2.0 * a1 * a1));
    let b = integrate_fn(nodes, |r| al.powi(4) / (1.0 + r * r).powi(4))
        + s3 * al.powi(4) * (a0.powi(4) / 4.0 + 1.0 / (4.0 * a1.powi(4)));
    // near 0 the weighted integrand is α⁴ r, near ∞ it is α⁴ r⁻⁵
    let gamma = integrate_fn(nodes, |r| al.powi(4) / (r * r * (1.0 + r * r).powi(3)))
        + s3 * al.powi(4) * (a0 * a0 / 2.0 + 1.0 / (4.0 * a1.powi(4)));

    UniversalConstants {
        alpha4: al,
        sphere3_area: s3,
        gamma4: GAMMA4,
        a,
        b,
        gamma,
        interaction_const: al.powi(4) * s3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn quadrature_matches_closed_forms() {
        let q = compute_constants();
        let c = UniversalConstants::closed_form();
        assert_relative_eq!(q.a, c.a, max_relative = 1e-8);
        assert_relative_eq!(q.b, c.b, max_relative = 1e-8);
        assert_relative_eq!(q.gamma, c.gamma, max_relative = 1e-8);
        assert_relative_eq!(c.a, 111.66183, max_relative = 1e-6);
        assert_relative_eq!(c.b, 105.27578, max_relative = 1e-6);
        assert_relative_eq!(c.gamma, 315.82734, max_relative = 1e-6);
    }

    #[test]
    fn cross_identities() {
        let q = compute_constants();
        assert_relative_eq!(q.a, q.alpha4 / q.gamma4, max_relative = 1e-10);
        assert_relative_eq!(q.a * q.a * q.gamma4, q.gamma, max_relative = 1e-10);
        assert_relative_eq!(q.interaction_const, 128.0 * PI * PI, max_relative = 1e-14);
        for v in [q.alpha4, q.sphere3_area, q.gamma4, q.a, q.b, q.gamma, q.interaction_const] {
            assert!(v > 0.0);
        }
    }

    #[test]
    fn robin_value_of_unit_ball() {
        let c = UniversalConstants::closed_form();
        assert_relative_eq!(c.robin_ball(1.0), 1.0 / (4.0 * PI * PI), max_relative = 1e-14);
        assert_relative_eq!(c.robin_ball(1.0), 0.0253303, max_relative = 1e-5);
    }
}
