use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::banded::BandMatrix;
use super::fem::Fem;
use crate::bubbles::{rate_schedule, schedule, Bubble, TowerConfig};
use crate::error::{Error, Result};
use crate::quadrature::{
    build_mesh, for_each_gauss_point, GradedMesh, RadialGridFunction, DEFAULT_POINTS_PER_DECADE,
};
use crate::bubbles::SPHERE3_AREA;

/// Largest tower height accepted by the solver.
pub const MAX_K: usize = 4;
/// Smallest hole radius accepted by the solver.
pub const MIN_EPS: f64 = 1e-9;
/// Largest mesh density accepted by the solver.
pub const MAX_PPD: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Stopping tolerance on the H¹ residual relative to the ansatz norm.
    pub tol: f64,
    pub max_iters: usize,
    /// Backtracking stops once the step length drops below this value.
    pub min_step: f64,
    /// Sufficient-decrease constant of the backtracking test.
    pub armijo: f64,
    /// Added to every diagonal entry of the Jacobian (zero by default).
    pub jacobian_floor: f64,
    pub points_per_decade: usize,
    /// Rate coefficients for the initial guess; `None` uses `cfg.d`.
    pub initial_d: Option<Vec<f64>>,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 50,
            min_step: 2f64.powi(-20),
            armijo: 1e-4,
            jacobian_floor: 0.0,
            points_per_decade: DEFAULT_POINTS_PER_DECADE,
            initial_d: None,
        }
    }
}

impl NewtonOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return crate::error::invalid(format!("Newton tolerance must be positive, got {}", self.tol));
        }
        if self.points_per_decade == 0 {
            return crate::error::invalid("points_per_decade must be positive");
        }
        Ok(())
    }
}

/// Discrete state of the system: one zero-trace grid function per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub cfg: TowerConfig,
    pub mesh: Arc<GradedMesh>,
    pub u: Vec<RadialGridFunction>,
    pub residual_h1: f64,
    pub newton_iters: usize,
    pub converged: bool,
    /// Relative residual before each Newton step.
    pub trace: Vec<f64>,
}

/// Weak residual of a state.
#[derive(Debug, Clone)]
pub struct Residual {
    /// Nodal weak residual `K u_i − load(N_i(u))` per component; boundary rows zeroed.
    pub weak: Vec<Vec<f64>>,
    /// Riesz representatives `K⁻¹ F_i`.
    pub riesz: Vec<RadialGridFunction>,
    /// `sqrt(Σ_i F_iᵀ K⁻¹ F_i)`.
    pub h1: f64,
}

/// Rejects runs outside the desk-scale envelope.
pub fn check_envelope(cfg: &TowerConfig, ppd: usize) -> Result<()> {
    if cfg.k() > MAX_K {
        return Err(Error::Envelope(format!("k = {} exceeds {MAX_K}", cfg.k())));
    }
    if cfg.eps < MIN_EPS {
        return Err(Error::Envelope(format!("eps = {:e} below {MIN_EPS:e}", cfg.eps)));
    }
    if ppd > MAX_PPD {
        return Err(Error::Envelope(format!("points_per_decade = {ppd} exceeds {MAX_PPD}")));
    }
    Ok(())
}

/// Log-uniform mesh on `[eps, R]` with `2·ppd` nodes per decade, the density
/// of the refinement windows of [`build_mesh`].
///
/// The solver deliberately avoids local refinement: the discrete energy of a
/// bubble on a log-uniform grid does not depend on its scale, so the fitted
/// scales are not pulled toward wherever the mesh happens to be finer.
pub fn solver_mesh(cfg: &TowerConfig, ppd: usize) -> Result<Arc<GradedMesh>> {
    Ok(Arc::new(build_mesh(cfg.eps, cfg.r_outer, &[], 2 * ppd)?))
}

/// Nodal values of `μ_i^{-1/2} Σ_{j∈I_i} P_h U_{δ_j}` for every component.
pub fn tower_ansatz(fem: &Fem, cfg: &TowerConfig, deltas: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = fem.len();
    let mut u = vec![vec![0.0; n]; cfg.m()];
    for (j, &delta) in deltas.iter().enumerate() {
        let i = cfg.partition.component_of(j + 1).expect("validated partition");
        let p = fem.projected_bubble(Bubble::new(delta)?);
        let s = cfg.mu[i].powf(-0.5);
        for (a, v) in u[i].iter_mut().zip(p) {
            *a += s * v;
        }
    }
    Ok(u)
}

/// Ansatz state for `cfg` on the solver mesh, not solved.
pub fn ansatz_state(cfg: &TowerConfig, ppd: usize) -> Result<SystemState> {
    cfg.validate()?;
    check_envelope(cfg, ppd)?;
    let mesh = solver_mesh(cfg, ppd)?;
    let fem = Fem::new(mesh.clone())?;
    let deltas = rate_schedule(cfg)?.deltas;
    let u = tower_ansatz(&fem, cfg, &deltas)?;
    let res = residual_raw(&fem, cfg, &u);
    let norm = ansatz_norm(&fem, &u);
    let u = u.into_iter().map(|v| fem.grid(v)).collect::<Result<Vec<_>>>()?;
    Ok(SystemState {
        cfg: cfg.clone(),
        mesh,
        u,
        residual_h1: res.1 / norm,
        newton_iters: 0,
        converged: false,
        trace: Vec::new(),
    })
}

/// Values of all components at the Gauss point `(e, t)`.
fn interpolate(u: &[Vec<f64>], e: usize, t: f64, out: &mut [f64]) {
    for (o, ui) in out.iter_mut().zip(u) {
        *o = ui[e] * (1.0 - t) + ui[e + 1] * t;
    }
}

/// `N_i(u) = μ_i (u_i⁺)³ + β u_i Σ_{j≠i} u_j²`.
fn nonlinearity(cfg: &TowerConfig, vals: &[f64], i: usize) -> f64 {
    let sq: f64 = vals.iter().map(|v| v * v).sum::<f64>() - vals[i] * vals[i];
    let pos = vals[i].max(0.0);
    cfg.mu[i] * pos * pos * pos + cfg.beta * vals[i] * sq
}

fn residual_raw(fem: &Fem, cfg: &TowerConfig, u: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let m = u.len();
    let mut weak: Vec<Vec<f64>> = u.iter().map(|ui| fem.apply(ui)).collect();
    let mut vals = vec![0.0; m];
    for_each_gauss_point(fem.nodes(), |e, r, w, t| {
        interpolate(u, e, t, &mut vals);
        let wr = SPHERE3_AREA * w * r * r * r;
        for i in 0..m {
            let g = wr * nonlinearity(cfg, &vals, i);
            weak[i][e] -= g * (1.0 - t);
            weak[i][e + 1] -= g * t;
        }
    });
    let last = fem.len() - 1;
    let mut sq = 0.0;
    for f in weak.iter_mut() {
        f[0] = 0.0;
        f[last] = 0.0;
        sq += fem.dual_norm(f).powi(2);
    }
    (weak, sq.sqrt())
}

fn ansatz_norm(fem: &Fem, u: &[Vec<f64>]) -> f64 {
    u.iter()
        .map(|ui| crate::quadrature::h1_inner_raw(fem.nodes(), ui, ui))
        .sum::<f64>()
        .sqrt()
}

fn raw_values(state: &SystemState) -> Vec<Vec<f64>> {
    state.u.iter().map(|g| g.values().to_vec()).collect()
}

/// Weak residual of `state`.
pub fn assemble_residual(state: &SystemState) -> Result<Residual> {
    let fem = Fem::new(state.mesh.clone())?;
    let u = raw_values(state);
    let (weak, h1) = residual_raw(&fem, &state.cfg, &u);
    let riesz = weak
        .iter()
        .map(|f| fem.grid(fem.solve(f)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Residual { weak, riesz, h1 })
}

/// Index of unknown `(interior node a, component i)`.
fn dof(a: usize, i: usize, m: usize) -> usize {
    (a - 1) * m + i
}

fn jacobian_raw(fem: &Fem, cfg: &TowerConfig, u: &[Vec<f64>], floor: f64) -> BandMatrix {
    let m = u.len();
    let n = fem.len();
    let ni = n - 2;
    let bw = 2 * m - 1;
    let mut jac = BandMatrix::zeros(ni * m, bw, bw);
    let interior = |a: usize| a >= 1 && a <= ni;
    for (e, k) in fem.element_stiffness().iter().enumerate() {
        for (a, b, s) in [(e, e, *k), (e + 1, e + 1, *k), (e, e + 1, -k), (e + 1, e, -k)] {
            if interior(a) && interior(b) {
                for i in 0..m {
                    jac.add(dof(a, i, m), dof(b, i, m), s);
                }
            }
        }
    }
    let mut vals = vec![0.0; m];
    let mut dn = vec![0.0; m * m];
    for_each_gauss_point(fem.nodes(), |e, r, w, t| {
        interpolate(u, e, t, &mut vals);
        let wr = SPHERE3_AREA * w * r * r * r;
        let total: f64 = vals.iter().map(|v| v * v).sum();
        for i in 0..m {
            for j in 0..m {
                dn[i * m + j] = if i == j {
                    let pos = vals[i].max(0.0);
                    3.0 * cfg.mu[i] * pos * pos + cfg.beta * (total - vals[i] * vals[i])
                } else {
                    2.0 * cfg.beta * vals[i] * vals[j]
                };
            }
        }
        let phi = [1.0 - t, t];
        for (la, a) in [e, e + 1].into_iter().enumerate() {
            if !interior(a) {
                continue;
            }
            for (lb, b) in [e, e + 1].into_iter().enumerate() {
                if !interior(b) {
                    continue;
                }
                let mass = wr * phi[la] * phi[lb];
                for i in 0..m {
                    for j in 0..m {
                        jac.add(dof(a, i, m), dof(b, j, m), -mass * dn[i * m + j]);
                    }
                }
            }
        }
    });
    if floor != 0.0 {
        for d in 0..ni * m {
            jac.add(d, d, floor);
        }
    }
    jac
}

/// Jacobian of the weak residual over the interior unknowns, ordered node
/// by node with the components interleaved.
pub fn assemble_jacobian(state: &SystemState) -> Result<BandMatrix> {
    let fem = Fem::new(state.mesh.clone())?;
    Ok(jacobian_raw(&fem, &state.cfg, &raw_values(state), 0.0))
}

fn gather(weak: &[Vec<f64>], ni: usize) -> Vec<f64> {
    let m = weak.len();
    let mut out = vec![0.0; ni * m];
    for (i, f) in weak.iter().enumerate() {
        for a in 1..=ni {
            out[dof(a, i, m)] = f[a];
        }
    }
    out
}

fn check_positive(fem: &Fem, u: &[Vec<f64>]) -> Result<()> {
    let nodes = fem.nodes();
    for (i, ui) in u.iter().enumerate() {
        for a in 1..nodes.len() - 1 {
            if !(ui[a] > 0.0) {
                return Err(Error::Positivity {
                    component: i,
                    radius: nodes[a],
                    value: ui[a],
                });
            }
        }
    }
    Ok(())
}

/// Damped Newton iteration from the tower ansatz.
pub fn newton_solve(cfg: &TowerConfig, opts: &NewtonOptions) -> Result<SystemState> {
    cfg.validate()?;
    opts.validate()?;
    check_envelope(cfg, opts.points_per_decade)?;
    let mesh = solver_mesh(cfg, opts.points_per_decade)?;
    let fem = Fem::new(mesh.clone())?;
    let d0 = opts.initial_d.as_deref().unwrap_or(&cfg.d);
    if d0.len() != cfg.k() || d0.iter().any(|&d| !(d > 0.0)) {
        return crate::error::invalid(format!("initial rate coefficients {d0:?} are not admissible"));
    }
    let deltas = schedule(cfg.eps, d0)?.deltas;
    let u0 = tower_ansatz(&fem, cfg, &deltas)?;
    newton_from(fem, cfg, u0, opts)
}

/// Newton iteration from an explicit initial guess on the mesh of `fem`.
pub(crate) fn newton_from(fem: Fem, cfg: &TowerConfig, mut u: Vec<Vec<f64>>, opts: &NewtonOptions) -> Result<SystemState> {
    let m = cfg.m();
    let ni = fem.interior();
    let scale = ansatz_norm(&fem, &u);
    let (mut weak, mut res) = residual_raw(&fem, cfg, &u);
    let mut trace = Vec::new();
    let mut iters = 0;
    loop {
        let rel = res / scale;
        trace.push(rel);
        if rel < opts.tol {
            break;
        }
        if iters >= opts.max_iters {
            return Err(Error::NoConvergence { iterations: iters, trace });
        }
        let lu = jacobian_raw(&fem, cfg, &u, opts.jacobian_floor).factor()?;
        let rhs: Vec<f64> = gather(&weak, ni).into_iter().map(|v| -v).collect();
        let du = lu.solve(&rhs);
        let mut alpha = 1.0;
        loop {
            let trial: Vec<Vec<f64>> = (0..m)
                .map(|i| {
                    let mut v = u[i].clone();
                    for a in 1..=ni {
                        v[a] += alpha * du[dof(a, i, m)];
                    }
                    v
                })
                .collect();
            let (w, r) = residual_raw(&fem, cfg, &trial);
            if r <= (1.0 - opts.armijo * alpha) * res {
                u = trial;
                weak = w;
                res = r;
                break;
            }
            alpha *= 0.5;
            if alpha < opts.min_step {
                trace.push(r / scale);
                return Err(Error::NoConvergence { iterations: iters + 1, trace });
            }
        }
        iters += 1;
    }
    check_positive(&fem, &u)?;
    let mesh = fem.mesh().clone();
    let grids = u.into_iter().map(|v| fem.grid(v)).collect::<Result<Vec<_>>>()?;
    Ok(SystemState {
        cfg: cfg.clone(),
        mesh,
        u: grids,
        residual_h1: res / scale,
        newton_iters: iters,
        converged: true,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bubbles::Partition;
    use crate::reduced::optimal_rates;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn k2_config(eps: f64, beta: f64) -> TowerConfig {
        let d = optimal_rates(2, -1.0, 1.0).unwrap();
        TowerConfig::new(1.0, eps, Partition::odd_even(2), beta, vec![1.0, 1.0], d, 0.1).unwrap()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn jacobian_is_symmetric() {
        let st = ansatz_state(&k2_config(1e-4, -1.0), 32).unwrap();
        let jac = assemble_jacobian(&st).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = jac.dim();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = dot(&jac.mul_vec(&v), &w);
        let b = dot(&v, &jac.mul_vec(&w));
        assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0), "{a} vs {b}");
    }

    #[test]
    fn jacobian_matches_directional_derivative() {
        let cfg = k2_config(1e-4, -1.0);
        let st = ansatz_state(&cfg, 32).unwrap();
        let fem = Fem::new(st.mesh.clone()).unwrap();
        let u = raw_values(&st);
        let ni = fem.interior();
        let m = cfg.m();
        let jac = jacobian_raw(&fem, &cfg, &u, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<f64> = (0..ni * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let jv = jac.mul_vec(&v);
        let f0 = gather(&residual_raw(&fem, &cfg, &u).0, ni);
        let gap = |h: f64| {
            let up: Vec<Vec<f64>> = (0..m)
                .map(|i| {
                    let mut x = u[i].clone();
                    for a in 1..=ni {
                        x[a] += h * v[dof(a, i, m)];
                    }
                    x
                })
                .collect();
            let f1 = gather(&residual_raw(&fem, &cfg, &up).0, ni);
            f1.iter()
                .zip(&f0)
                .zip(&jv)
                .map(|((a, b), c)| ((a - b) / h - c).powi(2))
                .sum::<f64>()
                .sqrt()
        };
        let (g4, g5, g6) = (gap(1e-4), gap(1e-5), gap(1e-6));
        assert!(g4 / g5 > 5.0 && g5 / g6 > 5.0, "gaps {g4:e} {g5:e} {g6:e}");
    }

    #[test]
    fn decoupled_jacobian_has_no_cross_blocks() {
        let st = ansatz_state(&k2_config(1e-4, 0.0), 16).unwrap();
        let jac = assemble_jacobian(&st).unwrap();
        let n = jac.dim();
        for r in 0..n {
            for c in r.saturating_sub(3)..(r + 4).min(n) {
                if (r % 2) != (c % 2) {
                    assert_eq!(jac.get(r, c), 0.0);
                }
            }
        }
    }

    #[test]
    fn envelope_enforced() {
        let cfg = k2_config(1e-4, -1.0);
        assert!(matches!(check_envelope(&cfg, 512), Err(Error::Envelope(_))));
        let mut deep = cfg.clone();
        deep.eps = 1e-10;
        assert!(matches!(check_envelope(&deep, 64), Err(Error::Envelope(_))));
    }
}
