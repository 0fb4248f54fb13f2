use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bubbles::{project_bubble, project_dbubble, rate_schedule, Bubble, TowerConfig};
use crate::error::{invalid, Error, Result};
use crate::quadrature::{build_mesh, h1_inner_raw};
use crate::solver::Fem;

/// Largest Gram-matrix condition number accepted by the orthogonal
/// projections.
pub const MAX_GRAM_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemainderNorm {
    /// `‖R_i‖_{H¹}` for each component.
    pub per_component: Vec<f64>,
    /// `sqrt(Σ_i ‖R_i‖²)`.
    pub total: f64,
    /// Largest Gram condition number met in the projections.
    pub gram_condition: f64,
}

/// Removes from `v` its H¹-orthogonal projection on `span(basis)`, returning
/// the Gram condition number.
pub fn project_out(nodes: &[f64], v: &mut [f64], basis: &[Vec<f64>]) -> Result<f64> {
    let n = basis.len();
    if n == 0 {
        return Ok(1.0);
    }
    let g = DMatrix::from_fn(n, n, |a, b| h1_inner_raw(nodes, &basis[a], &basis[b]));
    let eig = g.clone().symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &e| (l.min(e), h.max(e.abs())));
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(cond <= MAX_GRAM_CONDITION) {
        return Err(Error::IllConditioned(cond));
    }
    let rhs = DVector::from_iterator(n, basis.iter().map(|p| h1_inner_raw(nodes, v, p)));
    let coef = g.cholesky().ok_or(Error::IllConditioned(cond))?.solve(&rhs);
    for (c, p) in coef.iter().zip(basis) {
        for (x, y) in v.iter_mut().zip(p) {
            *x -= c * y;
        }
    }
    Ok(cond)
}

/// H¹ norms of `Π_i^⊥ I*[f(Σ P_εU) − Σ U³ + β u_i Σ_{j≠i} u_j²]` for the tower
/// ansatz of `cfg`, with `Π_i^⊥` removing `span{P_εψ_j : j ∈ I_i}`.
pub fn remainder_norm(cfg: &TowerConfig, ppd: usize) -> Result<RemainderNorm> {
    cfg.validate()?;
    if cfg.k() == 0 {
        return invalid("remainder needs at least one bubble");
    }
    let deltas = rate_schedule(cfg)?.deltas;
    let mesh = Arc::new(build_mesh(cfg.eps, cfg.r_outer, &deltas, ppd)?);
    let fem = Fem::new(mesh.clone())?;
    let nodes = mesh.nodes();
    let m = cfg.m();
    let mut bubbles = Vec::with_capacity(cfg.k());
    let mut projected = Vec::with_capacity(cfg.k());
    let mut owner = Vec::with_capacity(cfg.k());
    for (j, &delta) in deltas.iter().enumerate() {
        let b = Bubble::new(delta)?;
        bubbles.push(b);
        projected.push(project_bubble(b, cfg.eps, cfg.r_outer)?);
        owner.push(cfg.partition.component_of(j + 1).expect("validated partition"));
    }
    let scale: Vec<f64> = cfg.mu.iter().map(|mu| mu.powf(-0.5)).collect();
    let mut per_component = Vec::with_capacity(m);
    let mut cond_max: f64 = 1.0;
    let mut u = vec![0.0; m];
    let mut bubble_cubes = vec![0.0; m];
    for i in 0..m {
        let load = fem.load_gauss(|_, r, _| {
            u.iter_mut().for_each(|x| *x = 0.0);
            bubble_cubes.iter_mut().for_each(|x| *x = 0.0);
            for (l, p) in projected.iter().enumerate() {
                u[owner[l]] += scale[owner[l]] * p.eval(r);
                bubble_cubes[owner[l]] += scale[owner[l]] * bubbles[l].eval(r).powi(3);
            }
            let others: f64 = (0..m).filter(|&h| h != i).map(|h| u[h] * u[h]).sum();
            let pos = u[i].max(0.0);
            cfg.mu[i] * pos * pos * pos - bubble_cubes[i] + cfg.beta * u[i] * others
        });
        let mut v = fem.solve(&load);
        let basis: Vec<Vec<f64>> = (0..cfg.k())
            .filter(|&l| owner[l] == i)
            .map(|l| {
                let pd = project_dbubble(bubbles[l], cfg.eps, cfg.r_outer)?;
                Ok(nodes.iter().map(|&r| deltas[l] * pd.eval(r)).collect())
            })
            .collect::<Result<_>>()?;
        cond_max = cond_max.max(project_out(nodes, &mut v, &basis)?);
        per_component.push(h1_inner_raw(nodes, &v, &v).max(0.0).sqrt());
    }
    let total = per_component.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(RemainderNorm {
        per_component,
        total,
        gram_condition: cond_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bubbles::Partition;
    use crate::reduced::optimal_rates;

    #[test]
    fn decoupled_single_bubble_is_smaller_than_tower() {
        let single = TowerConfig::new(1.0, 1e-5, Partition::odd_even(1), 0.0, vec![1.0], vec![1.0], 0.1).unwrap();
        let d = optimal_rates(2, -1.0, 1.0).unwrap();
        let tower = TowerConfig::new(1.0, 1e-5, Partition::odd_even(2), -1.0, vec![1.0, 1.0], d, 0.1).unwrap();
        let a = remainder_norm(&single, 64).unwrap();
        let b = remainder_norm(&tower, 64).unwrap();
        assert!(a.total > 0.0);
        assert!(a.total < b.total, "{} vs {}", a.total, b.total);
        assert!(b.gram_condition < MAX_GRAM_CONDITION);
    }

    #[test]
    fn projection_removes_basis_component() {
        let mesh = build_mesh(1e-3, 1.0, &[0.1], 32).unwrap();
        let nodes = mesh.nodes();
        let p: Vec<f64> = nodes.iter().map(|r| (r - 1e-3) * (1.0 - r)).collect();
        let mut v: Vec<f64> = p.iter().map(|x| 3.0 * x).collect();
        project_out(nodes, &mut v, &[p.clone()]).unwrap();
        assert!(h1_inner_raw(nodes, &v, &v) < 1e-20);
        let dup = vec![p.clone(), p];
        assert!(matches!(project_out(nodes, &mut v, &dup), Err(Error::IllConditioned(_))));
    }
}
