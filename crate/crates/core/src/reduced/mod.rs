//! The finite-dimensional reduced problem `Ψ` and the energy of the tower
//! ansatz.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::AsymptoticReport;
use crate::bubbles::{
    project_bubble, rate_factors, rate_schedule, Bubble, ProjectedBubble, TowerConfig, UniversalConstants,
};
use crate::error::{invalid, Error, Result};
use crate::quadrature::{build_mesh, integrate_fn};

/// Coefficients of `Ψ(x) = a₁x₁ + a₂/x_k + a₃ Σ x_{i+1}/x_i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsiCoefficients {
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub k: usize,
}

impl PsiCoefficients {
    pub fn new(a1: f64, a2: f64, a3: f64, k: usize) -> Result<Self> {
        if !(a1 > 0.0 && a2 > 0.0 && a3 > 0.0) || k == 0 {
            return invalid(format!("Psi needs a1, a2, a3 > 0 and k >= 1, got ({a1}, {a2}, {a3}, {k})"));
        }
        Ok(Self { a1, a2, a3, k })
    }

    /// `a₁ = A²τ(0)/2`, `a₂ = Γ/2`, `a₃ = |β| α₄⁴|S³| / (2(k+1))` on `B_R`.
    pub fn from_problem(k: usize, beta: f64, r_outer: f64) -> Result<Self> {
        if !(beta < 0.0) {
            return invalid(format!(
                "focusing attractive coupling out of scope: need beta < 0, got {beta}"
            ));
        }
        let (a1, a2, a3) = raw_coefficients(k, beta, r_outer);
        Self::new(a1, a2, a3, k)
    }
}

fn raw_coefficients(k: usize, beta: f64, r_outer: f64) -> (f64, f64, f64) {
    let c = UniversalConstants::closed_form();
    (
        c.a * c.a * c.robin_ball(r_outer) / 2.0,
        c.gamma / 2.0,
        beta.abs() * c.interaction_const / (2.0 * (k + 1) as f64),
    )
}

fn check_point(c: &PsiCoefficients, x: &[f64]) -> Result<()> {
    if x.len() != c.k {
        return invalid(format!("Psi expects {} coordinates, got {}", c.k, x.len()));
    }
    if let Some(v) = x.iter().find(|v| !(**v > 0.0)) {
        return invalid(format!("Psi needs positive coordinates, got {v}"));
    }
    Ok(())
}

fn psi_raw(a1: f64, a2: f64, a3: f64, x: &[f64]) -> f64 {
    let k = x.len();
    a1 * x[0] + a2 / x[k - 1] + a3 * x.windows(2).map(|w| w[1] / w[0]).sum::<f64>()
}

pub fn psi_eval(c: &PsiCoefficients, x: &[f64]) -> Result<f64> {
    check_point(c, x)?;
    Ok(psi_raw(c.a1, c.a2, c.a3, x))
}

pub fn psi_grad(c: &PsiCoefficients, x: &[f64]) -> Result<Vec<f64>> {
    check_point(c, x)?;
    let k = c.k;
    let mut g = vec![0.0; k];
    g[0] += c.a1;
    g[k - 1] -= c.a2 / (x[k - 1] * x[k - 1]);
    for i in 0..k - 1 {
        g[i] -= c.a3 * x[i + 1] / (x[i] * x[i]);
        g[i + 1] += c.a3 / x[i];
    }
    Ok(g)
}

pub fn psi_hess(c: &PsiCoefficients, x: &[f64]) -> Result<DMatrix<f64>> {
    check_point(c, x)?;
    let k = c.k;
    let mut h = DMatrix::zeros(k, k);
    h[(k - 1, k - 1)] += 2.0 * c.a2 / x[k - 1].powi(3);
    for i in 0..k - 1 {
        h[(i, i)] += 2.0 * c.a3 * x[i + 1] / x[i].powi(3);
        let off = -c.a3 / (x[i] * x[i]);
        h[(i, i + 1)] += off;
        h[(i + 1, i)] += off;
    }
    Ok(h)
}

/// Closed-form minimiser of `Ψ` and the rate coefficients it selects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Minimizer {
    pub x: Vec<f64>,
    /// `√x*`.
    pub d: Vec<f64>,
    /// The same coefficients from the closed expression in `Γ`, `A²τ(0)` and
    /// the coupling constant.
    pub d_formula: Vec<f64>,
    /// Largest relative gap between `d` and `d_formula`.
    pub formula_gap: f64,
}

/// `x_i* = (a₂/a₃)^{i/(k+1)} (a₃/a₁)^{(k+1−i)/(k+1)}`.
pub fn minimizer_closed_form(c: &PsiCoefficients) -> Minimizer {
    let kp1 = (c.k + 1) as f64;
    let x: Vec<f64> = (1..=c.k)
        .map(|i| {
            let t = i as f64 / kp1;
            (c.a2 / c.a3).powf(t) * (c.a3 / c.a1).powf(1.0 - t)
        })
        .collect();
    let d: Vec<f64> = x.iter().map(|v| v.sqrt()).collect();
    // Γ = 2a₂, A²τ(0) = 2a₁, |β|α₄⁴|S³|/(k+1) = 2a₃
    let (gamma, a2tau, coupling) = (2.0 * c.a2, 2.0 * c.a1, 2.0 * c.a3);
    let d_formula: Vec<f64> = (1..=c.k)
        .map(|j| {
            let t = j as f64 / kp1;
            gamma.powf(t / 2.0) * a2tau.powf(t / 2.0 - 0.5) * coupling.powf(0.5 - t)
        })
        .collect();
    let formula_gap = d
        .iter()
        .zip(&d_formula)
        .map(|(a, b)| ((a - b) / a).abs())
        .fold(0.0, f64::max);
    debug_assert!(formula_gap < 1e-12, "minimiser formulas disagree: {formula_gap:e}");
    Minimizer {
        x,
        d,
        d_formula,
        formula_gap,
    }
}

/// Optimal rate coefficients `d*` for a competitive tower of height `k` on `B_R`.
pub fn optimal_rates(k: usize, beta: f64, r_outer: f64) -> Result<Vec<f64>> {
    Ok(minimizer_closed_form(&PsiCoefficients::from_problem(k, beta, r_outer)?).d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedPoint {
    pub x: Vec<f64>,
    pub psi_value: f64,
    pub gradient: Vec<f64>,
    pub hessian_min_eig: f64,
    pub iterations: usize,
}

fn smallest_eigenvalue(h: DMatrix<f64>) -> f64 {
    h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Damped Newton on `y = log x`, stopping once `‖∇Ψ‖ < 1e−12·(a₁+a₂+a₃)`.
pub fn psi_minimize_numeric(c: &PsiCoefficients, x0: &[f64]) -> Result<ReducedPoint> {
    check_point(c, x0)?;
    const MAX_ITERS: usize = 200;
    let tol = 1e-12 * (c.a1 + c.a2 + c.a3);
    let k = c.k;
    let mut y: Vec<f64> = x0.iter().map(|v| v.ln()).collect();
    let xs = |y: &[f64]| y.iter().map(|v| v.exp()).collect::<Vec<_>>();
    for it in 0..=MAX_ITERS {
        let x = xs(&y);
        let g = psi_grad(c, &x)?;
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < tol {
            let h = psi_hess(c, &x)?;
            return Ok(ReducedPoint {
                psi_value: psi_raw(c.a1, c.a2, c.a3, &x),
                gradient: g,
                hessian_min_eig: smallest_eigenvalue(h),
                x,
                iterations: it,
            });
        }
        if it == MAX_ITERS {
            break;
        }
        // chain rule: ∇_y = x∘g, H_y = D H D + diag(x∘g)
        let gy = DVector::from_iterator(k, x.iter().zip(&g).map(|(a, b)| a * b));
        let h = psi_hess(c, &x)?;
        let hy = DMatrix::from_fn(k, k, |i, j| x[i] * h[(i, j)] * x[j] + if i == j { gy[i] } else { 0.0 });
        // shift the Hessian until it is positive definite
        let mut shift = 0.0;
        let base = hy.diagonal().abs().max().max(1e-300);
        let step = loop {
            let shifted = &hy + DMatrix::identity(k, k) * shift;
            if let Some(ch) = shifted.cholesky() {
                break -ch.solve(&gy);
            }
            shift = if shift == 0.0 { 1e-10 * base } else { shift * 10.0 };
        };
        let f0 = psi_raw(c.a1, c.a2, c.a3, &x);
        let slope = gy.dot(&step);
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = y.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            let xt = xs(&trial);
            let f1 = psi_raw(c.a1, c.a2, c.a3, &xt);
            // near the minimum Ψ stalls at rounding level; fall back to the gradient norm
            let flat = (f1 - f0).abs() <= 8.0 * f64::EPSILON * f0.abs();
            let gnorm_trial = || psi_grad(c, &xt).map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt());
            if f1 <= f0 + 1e-4 * t * slope || (flat && gnorm_trial()? < gnorm) || t < 1e-12 {
                y = trial;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERS,
        trace: Vec::new(),
    })
}

/// Runs [`psi_minimize_numeric`] from `n` log-uniform random starts in
/// `[0.1, 10]^k`.
pub fn psi_multistart(c: &PsiCoefficients, n: usize, seed: u64) -> Result<Vec<ReducedPoint>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..c.k).map(|_| 10f64.powf(rng.gen_range(-1.0..1.0))).collect())
        .collect();
    starts.par_iter().map(|x0| psi_minimize_numeric(c, x0)).collect()
}

/// `Ψ(d₁², …, d_k²)` with coefficients built from `β` and `R`; unlike
/// [`PsiCoefficients::from_problem`] this accepts `β = 0`.
pub fn psi_at_rates(k: usize, beta: f64, r_outer: f64, d: &[f64]) -> f64 {
    let (a1, a2, a3) = raw_coefficients(k, beta, r_outer);
    let x: Vec<f64> = d.iter().map(|v| v * v).collect();
    psi_raw(a1, a2, a3, &x)
}

/// Closed-form projected bubbles of a configuration, grouped per component.
fn projected_tower(cfg: &TowerConfig) -> Result<Vec<Vec<ProjectedBubble>>> {
    let deltas = rate_schedule(cfg)?.deltas;
    let mut groups = vec![Vec::new(); cfg.m()];
    for (j, &delta) in deltas.iter().enumerate() {
        let i = cfg.partition.component_of(j + 1).expect("validated partition");
        groups[i].push(project_bubble(Bubble::new(delta)?, cfg.eps, cfg.r_outer)?);
    }
    Ok(groups)
}

/// `J_ε` of the pure tower ansatz `u_i = μ_i^{-1/2} Σ_{j∈I_i} P_εU_{δ_j}`.
pub fn reduced_energy_eval(cfg: &TowerConfig, ppd: usize) -> Result<f64> {
    cfg.validate()?;
    let groups = projected_tower(cfg)?;
    let deltas = rate_schedule(cfg)?.deltas;
    let mesh = build_mesh(cfg.eps, cfg.r_outer, &deltas, ppd)?;
    let nodes = mesh.nodes();
    let comp = |i: usize, r: f64| -> (f64, f64) {
        let s = cfg.mu[i].powf(-0.5);
        groups[i]
            .iter()
            .fold((0.0, 0.0), |(v, dv), p| (v + s * p.eval(r), dv + s * p.eval_dr(r)))
    };
    let m = cfg.m();
    let mut energy = 0.0;
    for i in 0..m {
        energy += integrate_fn(nodes, |r| {
            let (v, dv) = comp(i, r);
            let pos = v.max(0.0);
            0.5 * dv * dv - cfg.mu[i] * pos.powi(4) / 4.0
        });
    }
    for i in 0..m {
        for j in i + 1..m {
            let coupling = integrate_fn(nodes, |r| {
                let (a, _) = comp(i, r);
                let (b, _) = comp(j, r);
                a * a * b * b
            });
            energy -= cfg.beta / 2.0 * coupling;
        }
    }
    Ok(energy)
}

/// `ε^{2/(k+1)} (log 1/ε)^{(k−1)/(k+1)}`, the scale of the reduced energy.
pub fn expansion_scale(eps: f64, k: usize) -> f64 {
    let kp1 = (k + 1) as f64;
    eps.powf(2.0 / kp1) * (1.0 / eps).ln().powf((k as f64 - 1.0) / kp1)
}

/// Sweeps `eps` at fixed `d`, `k`, `β` and compares
/// `[J − kB/4] / [ε^{2/(k+1)} (log 1/ε)^{(k−1)/(k+1)}]` with `Ψ(d²)`.
///
/// The observed statistic is the ratio to `Ψ(d²)` at the smallest `eps`;
/// the report also requires it to be closer to 1 than at the largest one.
pub fn expansion_check(base: &TowerConfig, eps_values: &[f64], ppd: usize) -> Result<AsymptoticReport> {
    if eps_values.is_empty() {
        return invalid("expansion check needs at least one eps value");
    }
    let k = base.k();
    let b = UniversalConstants::closed_form().b;
    let target = psi_at_rates(k, base.beta, base.r_outer, &base.d);
    let ratios: Vec<f64> = eps_values
        .par_iter()
        .map(|&eps| {
            let cfg = base.with_eps(eps)?;
            let j = reduced_energy_eval(&cfg, ppd)?;
            Ok((j - k as f64 * b / 4.0) / expansion_scale(eps, k) / target)
        })
        .collect::<Result<_>>()?;
    let (imin, _) = eps_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let (imax, _) = eps_values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let closer = (ratios[imin] - 1.0).abs() < (ratios[imax] - 1.0).abs();
    Ok(AsymptoticReport::new(
        "reduced-expansion",
        8,
        "eps",
        eps_values.to_vec(),
        ratios.clone(),
        "ratio to Psi(d^2) at smallest eps",
        ratios[imin],
        1.0,
        0.1,
    )
    .note(format!("Psi(d^2) = {target:.6}"))
    .require(closer || eps_values.len() == 1, "ratio not closer to 1 at the smallest eps"))
}

/// Rate coefficients recovered from deltas: `d_j = δ_j / [ε^{j/(k+1)}(log 1/ε)^{1/2−j/(k+1)}]`.
pub fn rates_from_deltas(eps: f64, deltas: &[f64]) -> Result<Vec<f64>> {
    Ok(rate_factors(eps, deltas.len())?
        .iter()
        .zip(deltas)
        .map(|(f, d)| d / f)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotics::single_bubble_energy;
    use crate::bubbles::Partition;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn k2() -> PsiCoefficients {
        PsiCoefficients::from_problem(2, -1.0, 1.0).unwrap()
    }

    fn random_coefficients(rng: &mut ChaCha8Rng, k: usize) -> PsiCoefficients {
        let mut a = || 10f64.powf(rng.gen_range(-1.0..1.0));
        PsiCoefficients::new(a(), a(), a(), k).unwrap()
    }

    #[test]
    fn psi_values() {
        let c = PsiCoefficients::new(1.0, 1.0, 1.0, 1).unwrap();
        assert_eq!(psi_eval(&c, &[1.0]).unwrap(), 2.0);
        let c = k2();
        assert_relative_eq!(c.a1, 16.0 * PI * PI, max_relative = 1e-14);
        assert_relative_eq!(c.a2, 16.0 * PI * PI, max_relative = 1e-14);
        assert_relative_eq!(c.a3, 128.0 * PI * PI / 6.0, max_relative = 1e-14);
        assert_relative_eq!(psi_eval(&c, &[1.0, 1.0]).unwrap(), 526.38, max_relative = 1e-5);
        assert!(psi_eval(&c, &[1e6, 1.0]).unwrap() > 1e7);
        assert!(psi_eval(&c, &[1.0, 1e-6]).unwrap() > 1e7);
        assert!(psi_eval(&c, &[1.0, 0.0]).is_err());
        assert!(PsiCoefficients::from_problem(2, 0.5, 1.0).is_err());
    }

    #[test]
    fn gradient_and_hessian_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for k in 1..=5 {
            for _ in 0..10 {
                let c = random_coefficients(&mut rng, k);
                let x: Vec<f64> = (0..k).map(|_| rng.gen_range(0.5..2.0)).collect();
                let g = psi_grad(&c, &x).unwrap();
                let h = psi_hess(&c, &x).unwrap();
                let step = 1e-5;
                for i in 0..k {
                    let mut p = x.clone();
                    let mut q = x.clone();
                    p[i] += step;
                    q[i] -= step;
                    let fd = (psi_eval(&c, &p).unwrap() - psi_eval(&c, &q).unwrap()) / (2.0 * step);
                    assert!((fd - g[i]).abs() < 1e-6, "k={k} i={i}");
                    let gp = psi_grad(&c, &p).unwrap();
                    let gq = psi_grad(&c, &q).unwrap();
                    for j in 0..k {
                        let fd = (gp[j] - gq[j]) / (2.0 * step);
                        assert!((fd - h[(j, i)]).abs() < 1e-5 * (1.0 + h[(j, i)].abs()));
                    }
                }
            }
        }
    }

    #[test]
    fn k2_minimiser() {
        let m = minimizer_closed_form(&k2());
        assert_relative_eq!(m.x[0], 0.75f64.powf(1.0 / 3.0) * (4.0f64 / 3.0).powf(2.0 / 3.0), max_relative = 1e-12);
        assert_relative_eq!(m.x[0], 1.10064, max_relative = 1e-5);
        assert_relative_eq!(m.x[1], 0.90856, max_relative = 1e-5);
        assert_relative_eq!(m.d[0], 1.0491, max_relative = 1e-4);
        assert_relative_eq!(m.d[1], 0.95318, max_relative = 1e-5);
        let p = psi_minimize_numeric(&k2(), &[1.0, 1.0]).unwrap();
        for (a, b) in p.x.iter().zip(&m.x) {
            assert_relative_eq!(a, b, max_relative = 1e-8);
        }
        assert!(p.hessian_min_eig > 0.0);
    }

    #[test]
    fn k1_minimiser() {
        let c = PsiCoefficients::new(2.0, 8.0, 1.0, 1).unwrap();
        assert_relative_eq!(minimizer_closed_form(&c).x[0], 2.0, max_relative = 1e-14);
        let p = psi_minimize_numeric(&c, &[0.3]).unwrap();
        assert_relative_eq!(p.x[0], 2.0, max_relative = 1e-10);
        let c = PsiCoefficients::new(3.0, 3.0, 1.0, 1).unwrap();
        assert_relative_eq!(minimizer_closed_form(&c).d[0], 1.0, max_relative = 1e-14);
    }

    #[test]
    fn first_order_conditions_and_recurrence() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for k in 1..=6 {
            let c = random_coefficients(&mut rng, k);
            let m = minimizer_closed_form(&c);
            let x = &m.x;
            let scale = c.a1 + c.a2 + c.a3;
            for gi in psi_grad(&c, x).unwrap() {
                assert!(gi.abs() < 1e-10 * scale);
            }
            if k >= 2 {
                assert_relative_eq!(x[0] * x[0] * c.a1, c.a3 * x[1], max_relative = 1e-12);
                assert_relative_eq!(c.a3 * x[k - 1] * x[k - 1], c.a2 * x[k - 2], max_relative = 1e-12);
                for j in 1..k - 1 {
                    assert_relative_eq!(x[j] * x[j], x[j - 1] * x[j + 1], max_relative = 1e-12);
                }
                for j in 1..=k {
                    let rec = (c.a1 / c.a3).powi(j as i32 - 1) * x[0].powi(j as i32);
                    assert_relative_eq!(x[j - 1], rec, max_relative = 1e-12);
                }
            }
            assert!(smallest_eigenvalue(psi_hess(&c, x).unwrap()) > 0.0);
        }
    }

    #[test]
    fn odd_even_formula_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for k in 1..=8 {
            for _ in 0..5 {
                let m = minimizer_closed_form(&random_coefficients(&mut rng, k));
                assert!(m.formula_gap < 1e-12, "k={k}: {}", m.formula_gap);
            }
        }
    }

    #[test]
    fn multistart_uniqueness_k4() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for seed in 0..20 {
            let c = random_coefficients(&mut rng, 4);
            let exact = minimizer_closed_form(&c).x;
            for p in psi_multistart(&c, 3, seed).unwrap() {
                for (a, b) in p.x.iter().zip(&exact) {
                    assert_relative_eq!(a, b, max_relative = 1e-8);
                }
            }
        }
    }

    #[test]
    fn single_component_energy_reduces_to_single_bubble() {
        let cfg = TowerConfig::new(1.0, 1e-4, Partition::odd_even(1), 0.0, vec![1.0], vec![1.0], 0.1).unwrap();
        let j = reduced_energy_eval(&cfg, 64).unwrap();
        let delta = rate_schedule(&cfg).unwrap().deltas[0];
        let single = single_bubble_energy(delta, 1e-4, 1.0, 64).unwrap();
        assert_relative_eq!(j, single.measured, max_relative = 1e-12);
    }

    #[test]
    fn energy_increases_with_repulsion() {
        let d = optimal_rates(2, -1.0, 1.0).unwrap();
        let cfg = |beta| TowerConfig::new(1.0, 1e-4, Partition::odd_even(2), beta, vec![1.0, 1.0], d.clone(), 0.1).unwrap();
        let j1 = reduced_energy_eval(&cfg(-0.5), 64).unwrap();
        let j2 = reduced_energy_eval(&cfg(-1.0), 64).unwrap();
        let j3 = reduced_energy_eval(&cfg(-2.0), 64).unwrap();
        assert!(j1 < j2 && j2 < j3);
    }
}
