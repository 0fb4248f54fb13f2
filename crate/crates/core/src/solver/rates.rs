use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::fem::Fem;
use super::newton::{newton_solve, tower_ansatz, NewtonOptions, SystemState};
use crate::bubbles::{rate_factors, rate_schedule, schedule, Bubble, TowerConfig};
use crate::error::{invalid, Error, Result};
use crate::quadrature::h1_inner_raw;

/// Fit residual above which rate extraction is refused.
pub const MAX_FIT_RESIDUAL: f64 = 0.2;

/// Concentration scales recovered from a discrete state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub eps: f64,
    pub deltas: Vec<f64>,
    /// `δ_j / [ε^{j/(k+1)} (log 1/ε)^{1/2−j/(k+1)}]`.
    pub d: Vec<f64>,
    /// `‖u − model‖_{H¹} / ‖u‖_{H¹}` at the fitted deltas.
    pub residual: f64,
    pub iterations: usize,
}

/// Model `μ_i^{-1/2} Σ_{j∈I_i} P_h U_{δ_j}` per component and, per bubble, the
/// derivative in `log δ_j` of its own component.
fn model_and_jacobian(fem: &Fem, cfg: &TowerConfig, deltas: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let model = tower_ansatz(fem, cfg, deltas)?;
    let mut dlog = Vec::with_capacity(deltas.len());
    for (j, &delta) in deltas.iter().enumerate() {
        let i = cfg.partition.component_of(j + 1).expect("validated partition");
        let s = cfg.mu[i].powf(-0.5) * delta;
        dlog.push(fem.projected_dbubble(Bubble::new(delta)?).into_iter().map(|v| s * v).collect());
    }
    Ok((model, dlog))
}

/// Levenberg–Marquardt fit of `log δ_j` minimising `Σ_i ‖u_i − model_i‖²_{H¹}`.
/// At the optimum the gap is H¹-orthogonal to every `δ_j P_h ψ_j`.
pub(crate) fn fit_deltas(fem: &Fem, cfg: &TowerConfig, u: &[Vec<f64>], init: &[f64]) -> Result<RateFit> {
    let k = cfg.k();
    if init.len() != k || init.iter().any(|&d| !(d > 0.0)) {
        return invalid(format!("initial deltas {init:?} are not admissible"));
    }
    let nodes = fem.nodes();
    let owner: Vec<usize> = (1..=k)
        .map(|j| cfg.partition.component_of(j).expect("validated partition"))
        .collect();
    let signal: f64 = u.iter().map(|v| h1_inner_raw(nodes, v, v)).sum();
    if !(signal > 0.0) {
        return invalid("rate fit needs a nonzero state");
    }
    let gap = |model: &[Vec<f64>]| -> Vec<Vec<f64>> {
        model
            .iter()
            .zip(u)
            .map(|(w, v)| w.iter().zip(v).map(|(a, b)| a - b).collect())
            .collect()
    };
    let cost_of = |g: &[Vec<f64>]| -> f64 { g.iter().map(|v| h1_inner_raw(nodes, v, v)).sum() };
    let exp = |y: &[f64]| y.iter().map(|v| v.exp()).collect::<Vec<_>>();
    let mut y: Vec<f64> = init.iter().map(|d| d.ln()).collect();
    let (model, mut dlog) = model_and_jacobian(fem, cfg, &exp(&y))?;
    let mut res = gap(&model);
    let mut cost = cost_of(&res);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    for it in 0..200 {
        iterations = it;
        let jtj = DMatrix::from_fn(k, k, |a, b| {
            if owner[a] == owner[b] {
                h1_inner_raw(nodes, &dlog[a], &dlog[b])
            } else {
                0.0
            }
        });
        let jtr = DVector::from_fn(k, |a, _| h1_inner_raw(nodes, &dlog[a], &res[owner[a]]));
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for d in 0..k {
                a[(d, d)] += lambda * jtj[(d, d)].max(1e-300);
            }
            let step = match a.cholesky() {
                Some(ch) => -ch.solve(&jtr),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = y.iter().zip(step.iter()).map(|(a, s)| a + s).collect();
            let (m2, d2) = model_and_jacobian(fem, cfg, &exp(&trial))?;
            let r2 = gap(&m2);
            let c2 = cost_of(&r2);
            if c2 <= cost {
                let small = step.amax() < 1e-13 || cost - c2 <= 1e-15 * signal;
                y = trial;
                dlog = d2;
                res = r2;
                cost = c2;
                lambda = (lambda * 0.3).max(1e-12);
                improved = !small;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let deltas = exp(&y);
    let residual = (cost.max(0.0) / signal).sqrt();
    if residual > MAX_FIT_RESIDUAL {
        return Err(Error::FitFailure(residual));
    }
    let d = rate_factors(cfg.eps, k)?
        .iter()
        .zip(&deltas)
        .map(|(f, dl)| dl / f)
        .collect();
    Ok(RateFit {
        eps: cfg.eps,
        deltas,
        d,
        residual,
        iterations,
    })
}

fn state_values(state: &SystemState) -> Vec<Vec<f64>> {
    state.u.iter().map(|g| g.values().to_vec()).collect()
}

/// Fits the tower profile to a converged state, starting from the schedule
/// deltas of its configuration.
pub fn extract_rates(state: &SystemState) -> Result<RateFit> {
    if !state.converged {
        return invalid("rate extraction needs a converged state");
    }
    extract_rates_from(state, &rate_schedule(&state.cfg)?.deltas)
}

/// Like [`extract_rates`] with explicit initial deltas, and without the
/// convergence requirement.
pub fn extract_rates_from(state: &SystemState, init: &[f64]) -> Result<RateFit> {
    let fem = Fem::new(state.mesh.clone())?;
    fit_deltas(&fem, &state.cfg, &state_values(state), init)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectorNorm {
    /// `‖φ‖_{H¹}`.
    pub norm: f64,
    /// `‖φ‖ / δ₁`.
    pub over_delta1: f64,
    /// `‖φ‖ / [ε^{1/(k+1)} (log 1/ε)^{−1/(k+1)}]`.
    pub over_rate: f64,
}

/// `‖φ‖_{H¹}` with `φ_i = u_i − μ_i^{-1/2} Σ_{j∈I_i} P_h U_{δ_j^fit}`.
pub fn corrector_norm(state: &SystemState, fit: &RateFit) -> Result<CorrectorNorm> {
    let fem = Fem::new(state.mesh.clone())?;
    let model = tower_ansatz(&fem, &state.cfg, &fit.deltas)?;
    let nodes = fem.nodes();
    let sq: f64 = state
        .u
        .iter()
        .zip(&model)
        .map(|(u, w)| {
            let phi: Vec<f64> = u.values().iter().zip(w).map(|(a, b)| a - b).collect();
            h1_inner_raw(nodes, &phi, &phi)
        })
        .sum();
    let norm = sq.max(0.0).sqrt();
    let eps = state.cfg.eps;
    let kp1 = (state.cfg.k() + 1) as f64;
    let rate = eps.powf(1.0 / kp1) * (1.0 / eps).ln().powf(-1.0 / kp1);
    Ok(CorrectorNorm {
        norm,
        over_delta1: norm / fit.deltas[0],
        over_rate: norm / rate,
    })
}

/// One converged point of a continuation sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub state: SystemState,
    pub fit: RateFit,
}

/// Output of [`continuation_sweep`]: every point solved before the first
/// failure, and that failure if there was one.
#[derive(Debug)]
pub struct Continuation {
    pub points: Vec<SweepPoint>,
    pub failure: Option<Error>,
}

/// Solves at decreasing `eps`, each solve starting from the ansatz with the
/// rate coefficients fitted at the previous point. Every solve uses the mesh
/// graded around the schedule of `cfg.d` at its own `eps`.
pub fn continuation_sweep(cfg: &TowerConfig, eps_values: &[f64], opts: &NewtonOptions) -> Result<Continuation> {
    if eps_values.windows(2).any(|w| !(w[1] < w[0])) {
        return invalid("continuation needs a strictly decreasing eps sequence");
    }
    let mut points: Vec<SweepPoint> = Vec::with_capacity(eps_values.len());
    for &eps in eps_values {
        let step = || -> Result<SweepPoint> {
            let c = cfg.with_eps(eps)?;
            let mut o = opts.clone();
            if let Some(prev) = points.last() {
                o.initial_d = Some(prev.fit.d.clone());
            }
            let state = newton_solve(&c, &o)?;
            let init = schedule(eps, o.initial_d.as_deref().unwrap_or(&c.d))?.deltas;
            let fit = extract_rates_from(&state, &init)?;
            Ok(SweepPoint { state, fit })
        };
        match step() {
            Ok(p) => points.push(p),
            Err(e) => {
                return Ok(Continuation {
                    points,
                    failure: Some(Error::Sweep {
                        eps,
                        source: Box::new(e),
                    }),
                })
            }
        }
    }
    Ok(Continuation { points, failure: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bubbles::Partition;
    use crate::reduced::optimal_rates;
    use crate::solver::ansatz_state;

    fn k2_config(eps: f64) -> TowerConfig {
        let d = optimal_rates(2, -1.0, 1.0).unwrap();
        TowerConfig::new(1.0, eps, Partition::odd_even(2), -1.0, vec![1.0, 1.0], d, 0.1).unwrap()
    }

    #[test]
    fn synthetic_tower_recovers_deltas() {
        let cfg = k2_config(1e-6);
        let st = ansatz_state(&cfg, 32).unwrap();
        let truth = rate_schedule(&cfg).unwrap().deltas;
        let init: Vec<f64> = truth.iter().zip([1.3, 0.75]).map(|(d, f)| d * f).collect();
        let fit = extract_rates_from(&st, &init).unwrap();
        for (a, b) in fit.deltas.iter().zip(&truth) {
            assert!((a / b - 1.0).abs() < 1e-6, "{a} vs {b}");
        }
        for (a, b) in fit.d.iter().zip(&cfg.d) {
            assert!((a / b - 1.0).abs() < 1e-6);
        }
        assert!(fit.residual < 1e-6);
        let gap = corrector_norm(&st, &fit).unwrap();
        assert!(gap.norm < 1e-5, "{}", gap.norm);
    }

    #[test]
    fn single_bubble_fit_is_exact() {
        let cfg = TowerConfig::new(1.0, 1e-6, Partition::odd_even(1), 0.0, vec![1.0], vec![1.0], 0.1).unwrap();
        let fem = Fem::new(crate::solver::solver_mesh(&cfg, 32).unwrap()).unwrap();
        let u = tower_ansatz(&fem, &cfg, &[1e-3]).unwrap();
        let fit = fit_deltas(&fem, &cfg, &u, &[2e-3]).unwrap();
        assert!((fit.deltas[0] / 1e-3 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn unrelated_data_is_refused() {
        let cfg = k2_config(1e-6);
        let fem = Fem::new(crate::solver::solver_mesh(&cfg, 32).unwrap()).unwrap();
        let nodes = fem.nodes();
        let bump: Vec<f64> = nodes.iter().map(|r| (r - 1e-6) * (1.0 - r)).collect();
        let u = vec![bump.clone(), bump];
        let init = rate_schedule(&cfg).unwrap().deltas;
        assert!(matches!(fit_deltas(&fem, &cfg, &u, &init), Err(Error::FitFailure(_))));
    }

    #[test]
    fn extraction_requires_convergence() {
        let st = ansatz_state(&k2_config(1e-5), 32).unwrap();
        assert!(matches!(extract_rates(&st), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn empty_continuation_is_empty() {
        let out = continuation_sweep(&k2_config(1e-4), &[], &NewtonOptions::default()).unwrap();
        assert!(out.points.is_empty() && out.failure.is_none());
        assert!(continuation_sweep(&k2_config(1e-4), &[1e-5, 1e-4], &NewtonOptions::default()).is_err());
    }

    #[test]
    fn single_step_continuation_matches_direct_solve() {
        let cfg = k2_config(1e-4);
        let opts = NewtonOptions {
            points_per_decade: 32,
            ..NewtonOptions::default()
        };
        let out = continuation_sweep(&cfg, &[1e-5], &opts).unwrap();
        assert!(out.failure.is_none());
        let direct = newton_solve(&cfg.with_eps(1e-5).unwrap(), &opts).unwrap();
        let a = &out.points[0].state;
        for (x, y) in a.u.iter().zip(&direct.u) {
            for (p, q) in x.values().iter().zip(y.values()) {
                assert!((p - q).abs() <= 1e-8 * q.abs().max(1.0));
            }
        }
    }
}
