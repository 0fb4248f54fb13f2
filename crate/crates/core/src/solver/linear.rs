use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::fem::Fem;
use super::newton::{assemble_jacobian, SystemState};
use super::rates::extract_rates;
use crate::asymptotics::MAX_GRAM_CONDITION;
use crate::bubbles::{rate_schedule, Bubble};
use crate::error::{Error, Result};

/// Smallest singular values of the linearised operator relative to the H¹
/// Gram form, with and without the restriction to the complement of the
/// approximate kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearizationSpectrum {
    /// On the H¹-orthogonal complement of `span{δ_j P_h ψ_j}`.
    pub projected: f64,
    /// On the whole zero-trace space.
    pub unprojected: f64,
    /// Condition number of the kernel Gram matrix.
    pub gram_condition: f64,
}

/// Applies `f` to every component slice of an interleaved vector.
fn per_component(v: &mut [f64], m: usize, mut f: impl FnMut(&mut [f64])) {
    let ni = v.len() / m;
    let mut buf = vec![0.0; ni];
    for i in 0..m {
        for a in 0..ni {
            buf[a] = v[a * m + i];
        }
        f(&mut buf);
        for a in 0..ni {
            v[a * m + i] = buf[a];
        }
    }
}

/// Smallest generalised singular value of the Jacobian at `state` against
/// the stiffness form, on the whole space and on the complement of the
/// kernel directions `δ_j P_h ψ_j` (each carried by its own component).
///
/// Converged states use fitted scales for the kernel directions, ansatz
/// states the scales of their rate schedule.
pub fn projected_linearization_sigma_min(state: &SystemState) -> Result<LinearizationSpectrum> {
    let fem = Fem::new(state.mesh.clone())?;
    let cfg = &state.cfg;
    let m = cfg.m();
    let ni = fem.interior();
    let n = ni * m;
    let jac = assemble_jacobian(state)?;

    // C = L⁻¹ A L⁻ᵀ with K = L Lᵀ block-diagonal over the components.
    let mut b = DMatrix::<f64>::zeros(n, n);
    let band = 2 * m;
    let mut col = vec![0.0; n];
    for c in 0..n {
        for (r, x) in col.iter_mut().enumerate() {
            *x = if r.abs_diff(c) < band { jac.get(r, c) } else { 0.0 };
        }
        per_component(&mut col, m, |y| fem.chol_forward(y));
        b.set_column(c, &DVector::from_column_slice(&col));
    }
    let mut c_mat = DMatrix::<f64>::zeros(n, n);
    for r in 0..n {
        col.copy_from_slice(b.row(r).transpose().as_slice());
        per_component(&mut col, m, |y| fem.chol_forward(y));
        c_mat.set_column(r, &DVector::from_column_slice(&col));
    }
    let c_mat = (&c_mat + c_mat.transpose()) * 0.5;

    let unprojected = c_mat
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |acc, e| acc.min(e.abs()));

    let deltas = if state.converged {
        extract_rates(state)?.deltas
    } else {
        rate_schedule(cfg)?.deltas
    };
    let k = deltas.len();
    let mut q = DMatrix::<f64>::zeros(n, k);
    for (j, &delta) in deltas.iter().enumerate() {
        let owner = cfg.partition.component_of(j + 1).expect("validated partition");
        let p = fem.projected_dbubble(Bubble::new(delta)?);
        let mut y: Vec<f64> = p[1..=ni].iter().map(|v| delta * v).collect();
        fem.chol_transpose_apply(&mut y);
        for (a, v) in y.into_iter().enumerate() {
            q[(a * m + owner, j)] = v;
        }
    }
    let gram = q.transpose() * &q;
    let eig = gram.symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &e| (l.min(e), h.max(e.abs())));
    let gram_condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(gram_condition <= MAX_GRAM_CONDITION) {
        return Err(Error::IllConditioned(gram_condition));
    }
    let q = q.qr().q();

    // P C P + s Q Qᵀ with s above the spectral radius of C: the kernel
    // directions are pushed out of the way and the rest is the restriction.
    let bound = c_mat.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let shift = 2.0 * bound + 1.0;
    let pc = &c_mat - &q * (q.transpose() * &c_mat);
    let pcp = &pc - (&pc * &q) * q.transpose();
    let restricted = (&pcp + pcp.transpose()) * 0.5 + (&q * q.transpose()) * shift;
    let projected = restricted
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |acc, e| acc.min(e.abs()));
    Ok(LinearizationSpectrum {
        projected,
        unprojected,
        gram_condition,
    })
}
