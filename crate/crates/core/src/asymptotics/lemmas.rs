//! Closed-form integrals behind the asymptotic estimates, evaluated by
//! quadrature on graded meshes.

use serde::{Deserialize, Serialize};

use crate::bubbles::{project_bubble, Bubble, UniversalConstants};
use crate::error::{invalid, Result};
use crate::quadrature::{build_mesh, integrate_fn};

/// Measured single-bubble energy next to its two-term model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleBubbleEnergy {
    pub measured: f64,
    /// `B/4 + (A²τ(0)/2)δ² + (Γ/2)(ε/δ)²`.
    pub model: f64,
    /// `(measured − B/4) / (model − B/4)`.
    pub ratio: f64,
}

fn check_separation(eps: f64, delta: f64, r_outer: f64) -> Result<()> {
    if !(eps > 0.0 && eps < delta && delta < r_outer) {
        return invalid(format!(
            "need 0 < eps < delta < R, got eps={eps:e}, delta={delta:e}, R={r_outer:e}"
        ));
    }
    Ok(())
}

/// `∫ ½|∇P_εU|² − ¼(P_εU)⁴` over the annulus.
pub fn single_bubble_energy(delta: f64, eps: f64, r_outer: f64, ppd: usize) -> Result<SingleBubbleEnergy> {
    check_separation(eps, delta, r_outer)?;
    let p = project_bubble(Bubble::new(delta)?, eps, r_outer)?;
    let mesh = build_mesh(eps, r_outer, &[delta], ppd)?;
    let measured = integrate_fn(mesh.nodes(), |r| {
        let v = p.eval(r);
        let dv = p.eval_dr(r);
        0.5 * dv * dv - 0.25 * v.powi(4)
    });
    let c = UniversalConstants::closed_form();
    let base = c.b / 4.0;
    let correction = c.a * c.a * c.robin_ball(r_outer) * delta * delta / 2.0 + c.gamma * (eps / delta).powi(2) / 2.0;
    Ok(SingleBubbleEnergy {
        measured,
        model: base + correction,
        ratio: (measured - base) / correction,
    })
}

/// `∫ U_a² U_b²` (or the projected version) over the annulus; symmetric in
/// the two scales.
pub fn interaction_integral(
    delta_a: f64,
    delta_b: f64,
    eps: f64,
    r_outer: f64,
    ppd: usize,
    projected: bool,
) -> Result<f64> {
    check_separation(eps, delta_a.min(delta_b), r_outer)?;
    if delta_a.max(delta_b) >= r_outer {
        return invalid("scales must lie inside the domain");
    }
    let (lo, hi) = if delta_a <= delta_b { (delta_a, delta_b) } else { (delta_b, delta_a) };
    let mesh = build_mesh(eps, r_outer, &[lo, hi], ppd)?;
    let (ba, bb) = (Bubble::new(lo)?, Bubble::new(hi)?);
    if projected {
        let (pa, pb) = (project_bubble(ba, eps, r_outer)?, project_bubble(bb, eps, r_outer)?);
        Ok(integrate_fn(mesh.nodes(), |r| (pa.eval(r) * pb.eval(r)).powi(2)))
    } else {
        Ok(integrate_fn(mesh.nodes(), |r| (ba.eval(r) * bb.eval(r)).powi(2)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionPair {
    pub value: f64,
    /// `α₄⁴|S³| (δ_i/δ_j)² log(δ_j/δ_i)`.
    pub model: f64,
    pub ratio: f64,
}

fn interaction_model(delta_i: f64, delta_j: f64) -> f64 {
    let c = UniversalConstants::closed_form();
    let t = delta_i / delta_j;
    c.interaction_const * t * t * (1.0 / t).ln()
}

fn check_order(delta_i: f64, delta_j: f64) -> Result<()> {
    if !(delta_i < delta_j) {
        return invalid(format!(
            "interaction needs delta_i < delta_j, got {delta_i:e} and {delta_j:e}"
        ));
    }
    Ok(())
}

/// `∫ U_i² U_j²` with `δ_i < δ_j`, compared with its leading model.
pub fn interaction_pair(delta_i: f64, delta_j: f64, eps: f64, r_outer: f64, ppd: usize) -> Result<InteractionPair> {
    check_order(delta_i, delta_j)?;
    let value = interaction_integral(delta_i, delta_j, eps, r_outer, ppd, false)?;
    let model = interaction_model(delta_i, delta_j);
    Ok(InteractionPair {
        value,
        model,
        ratio: value / model,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectedInteraction {
    pub projected: f64,
    pub unprojected: f64,
    pub model: f64,
    pub ratio: f64,
    /// `|projected − unprojected| / model`.
    pub gap: f64,
}

/// `∫ (P_εU_i)² (P_εU_j)²` alongside the unprojected integral.
pub fn projected_interaction_pair(
    delta_i: f64,
    delta_j: f64,
    eps: f64,
    r_outer: f64,
    ppd: usize,
) -> Result<ProjectedInteraction> {
    check_order(delta_i, delta_j)?;
    let projected = interaction_integral(delta_i, delta_j, eps, r_outer, ppd, true)?;
    let unprojected = interaction_integral(delta_i, delta_j, eps, r_outer, ppd, false)?;
    let model = interaction_model(delta_i, delta_j);
    Ok(ProjectedInteraction {
        projected,
        unprojected,
        model,
        ratio: projected / model,
        gap: (projected - unprojected).abs() / model,
    })
}

/// `∫_{B_R} U_δ^q`, with the ball centre handled by its analytic head.
pub fn lq_bubble_norm(delta: f64, q: f64, r_outer: f64, ppd: usize) -> Result<f64> {
    if !(q > 0.0) {
        return invalid(format!("lq norm needs q > 0, got {q}"));
    }
    if !(delta > 0.0 && delta < r_outer) {
        return invalid(format!("need 0 < delta < R, got delta={delta:e}"));
    }
    let b = Bubble::new(delta)?;
    let r0 = 1e-6 * delta;
    let mesh = build_mesh(r0, r_outer, &[delta], ppd)?;
    let c = UniversalConstants::closed_form();
    let head = c.sphere3_area * b.eval(0.0).powf(q) * r0.powi(4) / 4.0;
    Ok(integrate_fn(mesh.nodes(), |r| b.eval(r).powf(q)) + head)
}

/// Validated exponent pair for the mixed interaction.
fn check_pq(p: f64, q: f64) -> Result<()> {
    if (p + q - 4.0).abs() > 1e-12 || !(1.0 < q && q < 2.0 && 2.0 < p) {
        return invalid(format!("mixed interaction needs p + q = 4 and 1 < q < 2 < p, got p={p}, q={q}"));
    }
    Ok(())
}

/// `(∫ U_{ρ₁}^p U_{ρ₂}^q, ∫ U_{ρ₂}^p U_{ρ₁}^q)` over the annulus.
pub fn mixed_pq_interaction(rho1: f64, rho2: f64, p: f64, q: f64, eps: f64, r_outer: f64, ppd: usize) -> Result<(f64, f64)> {
    check_pq(p, q)?;
    if !(rho2 < rho1) {
        return invalid(format!("mixed interaction needs rho2 < rho1, got {rho1:e}, {rho2:e}"));
    }
    check_separation(eps, rho2, r_outer)?;
    if rho1 >= r_outer {
        return invalid("rho1 must lie inside the domain");
    }
    let mesh = build_mesh(eps, r_outer, &[rho2, rho1], ppd)?;
    let (b1, b2) = (Bubble::new(rho1)?, Bubble::new(rho2)?);
    let fwd = integrate_fn(mesh.nodes(), |r| b1.eval(r).powf(p) * b2.eval(r).powf(q));
    let bwd = integrate_fn(mesh.nodes(), |r| b2.eval(r).powf(p) * b1.eval(r).powf(q));
    Ok((fwd, bwd))
}

/// `∫ (U_{ρ₁} U_{ρ₂} U_{ρ₃})^{4/3}` with `ρ₃ < ρ₂ < ρ₁`.
pub fn triple_interaction(rho1: f64, rho2: f64, rho3: f64, eps: f64, r_outer: f64, ppd: usize) -> Result<f64> {
    if !(rho3 < rho2 && rho2 < rho1) {
        return invalid(format!("triple interaction needs rho3 < rho2 < rho1, got {rho1:e}, {rho2:e}, {rho3:e}"));
    }
    check_separation(eps, rho3, r_outer)?;
    if rho1 >= r_outer {
        return invalid("rho1 must lie inside the domain");
    }
    let mesh = build_mesh(eps, r_outer, &[rho3, rho2, rho1], ppd)?;
    let b = [Bubble::new(rho1)?, Bubble::new(rho2)?, Bubble::new(rho3)?];
    Ok(integrate_fn(mesh.nodes(), |r| {
        (b[0].eval(r) * b[1].eval(r) * b[2].eval(r)).powf(4.0 / 3.0)
    }))
}

/// `∫ U² (P_εU − U)²` over the annulus.
pub fn projection_l2_error(delta: f64, eps: f64, r_outer: f64, ppd: usize) -> Result<f64> {
    check_separation(eps, delta, r_outer)?;
    let b = Bubble::new(delta)?;
    let p = project_bubble(b, eps, r_outer)?;
    let mesh = build_mesh(eps, r_outer, &[delta], ppd)?;
    Ok(integrate_fn(mesh.nodes(), |r| (b.eval(r) * p.correction(r)).powi(2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    const PPD: usize = 64;

    #[test]
    fn single_energy_model_terms() {
        let e = single_bubble_energy(0.05, 1e-4, 1.0, PPD).unwrap();
        let c = UniversalConstants::closed_form();
        assert_relative_eq!(c.b / 4.0, 26.319, max_relative = 1e-4);
        assert_relative_eq!(e.model - c.b / 4.0, 0.39478 + 6.3166e-4, max_relative = 1e-3);
        assert!(e.measured > c.b / 4.0);
        assert!(single_bubble_energy(1e-4, 1e-4, 1.0, PPD).is_err());
        // the two correction coefficients coincide on the unit ball
        assert_relative_eq!(c.a * c.a * c.robin_ball(1.0), c.gamma, max_relative = 1e-12);
    }

    #[test]
    fn single_energy_tends_to_base_value() {
        let b4 = UniversalConstants::closed_form().b / 4.0;
        let gaps: Vec<f64> = [0.1, 0.03, 0.01]
            .iter()
            .map(|&d| single_bubble_energy(d, d * d, 1.0, PPD).unwrap().measured - b4)
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2] && gaps[2] > 0.0);
    }

    #[test]
    fn interaction_leading_model_and_symmetry() {
        let p = interaction_pair(1e-3, 1e-1, 1e-6, 1.0, PPD).unwrap();
        assert_relative_eq!(p.model, 128.0 * PI * PI * 1e-4 * 100f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(p.model, 0.58177, max_relative = 1e-4);
        let a = interaction_integral(1e-3, 1e-1, 1e-6, 1.0, PPD, false).unwrap();
        let b = interaction_integral(1e-1, 1e-3, 1e-6, 1.0, PPD, false).unwrap();
        assert_eq!(a, b);
        assert!(interaction_pair(1e-1, 1e-3, 1e-6, 1.0, PPD).is_err());
    }

    #[test]
    fn whole_space_interaction_closed_form() {
        // ∫_{ℝ⁴} U_a² U_b² = 128π² t² (ln(1/t) − 1) + O(t⁴ log) with t = a/b
        for t in [1e-2, 1e-3] {
            let v = interaction_integral(1e-1 * t, 1e-1, 1e-6 * t, 1e3, PPD, false).unwrap();
            let exact = 128.0 * PI * PI * t * t * ((1.0 / t).ln() - 1.0);
            assert_relative_eq!(v, exact, max_relative = 1e-3);
        }
    }

    #[test]
    fn projected_gap_shrinks_with_eps() {
        let a = projected_interaction_pair(1e-3, 1e-1, 1e-5, 1.0, PPD).unwrap();
        let b = projected_interaction_pair(1e-3, 1e-1, 1e-6, 1.0, PPD).unwrap();
        assert!(b.gap <= a.gap);
        assert!(b.gap < 0.05, "gap {}", b.gap);
        assert!(b.projected < b.unprojected);
    }

    #[test]
    fn interactions_vanish_with_a_scale() {
        let v1 = interaction_integral(1e-7, 1e-1, 1e-9, 1.0, PPD, true).unwrap();
        let v2 = interaction_integral(1e-4, 1e-1, 1e-6, 1.0, PPD, true).unwrap();
        assert!(v1 < 1e-4 * v2);
    }

    #[test]
    fn lq_fourth_power_is_b() {
        let b = UniversalConstants::closed_form().b;
        assert_relative_eq!(lq_bubble_norm(1e-4, 4.0, 1.0, PPD).unwrap(), b, max_relative = 1e-6);
    }

    #[test]
    fn mixed_rejects_bad_exponents() {
        assert!(mixed_pq_interaction(0.1, 0.01, 3.0, 1.5, 1e-6, 1.0, PPD).is_err());
        assert!(mixed_pq_interaction(0.1, 0.01, 2.5, 1.5, 1e-6, 1.0, PPD).is_ok());
        assert!(mixed_pq_interaction(0.01, 0.1, 2.5, 1.5, 1e-6, 1.0, PPD).is_err());
    }

    #[test]
    fn triple_is_positive_and_conformally_invariant() {
        let v = triple_interaction(1e-1, 1e-2, 1e-3, 1e-6, 1.0, PPD).unwrap();
        assert!(v > 0.0 && v.is_finite());
        let w = triple_interaction(2e-1, 2e-2, 2e-3, 2e-6, 2.0, PPD).unwrap();
        assert_relative_eq!(v, w, max_relative = 1e-6);
        assert!(triple_interaction(1e-2, 1e-1, 1e-3, 1e-6, 1.0, PPD).is_err());
    }

    #[test]
    fn l2_error_nonnegative() {
        assert!(projection_l2_error(0.05, 0.0025, 1.0, PPD).unwrap() >= 0.0);
    }
}
