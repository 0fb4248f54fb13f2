//! P1 finite elements for the radial Laplacian in four dimensions.

use std::sync::Arc;

use crate::bubbles::{Bubble, SPHERE3_AREA};
use crate::error::{invalid, Error, Result};
use crate::quadrature::{for_each_gauss_point, GradedMesh, RadialGridFunction};

/// Stiffness matrix `|S³| ∫ φ_a' φ_b' r³ dr` of a graded mesh together with
/// the Cholesky factor of its interior block.
#[derive(Debug, Clone)]
pub struct Fem {
    mesh: Arc<GradedMesh>,
    /// Element stiffness `k_e = |S³|(b⁴ − a⁴)/(4h²)`.
    elem: Vec<f64>,
    /// Cholesky factor of the interior block: diagonal and subdiagonal.
    chol_diag: Vec<f64>,
    chol_sub: Vec<f64>,
}

impl Fem {
    pub fn new(mesh: Arc<GradedMesh>) -> Result<Self> {
        let nodes = mesh.nodes();
        if nodes.len() < 3 {
            return invalid("mesh needs at least one interior node");
        }
        let elem: Vec<f64> = nodes
            .windows(2)
            .map(|w| {
                let h = w[1] - w[0];
                SPHERE3_AREA * (w[1].powi(4) - w[0].powi(4)) / (4.0 * h * h)
            })
            .collect();
        let ni = nodes.len() - 2;
        let mut chol_diag = vec![0.0; ni];
        let mut chol_sub = vec![0.0; ni.saturating_sub(1)];
        for i in 0..ni {
            // interior node i+1 sits between elements i and i+1
            let mut d = elem[i] + elem[i + 1];
            if i > 0 {
                let l = -elem[i] / chol_diag[i - 1];
                chol_sub[i - 1] = l;
                d -= l * l;
            }
            if !(d > 0.0) {
                return Err(Error::Singular(i + 1));
            }
            chol_diag[i] = d.sqrt();
        }
        Ok(Self {
            mesh,
            elem,
            chol_diag,
            chol_sub,
        })
    }

    pub fn mesh(&self) -> &Arc<GradedMesh> {
        &self.mesh
    }

    pub fn nodes(&self) -> &[f64] {
        self.mesh.nodes()
    }

    pub fn len(&self) -> usize {
        self.mesh.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mesh.is_empty()
    }

    /// Number of interior (free) nodes.
    pub fn interior(&self) -> usize {
        self.mesh.len() - 2
    }

    pub fn element_stiffness(&self) -> &[f64] {
        &self.elem
    }

    /// Cholesky factor `L` of the interior stiffness block (`K = L Lᵀ`), as
    /// diagonal and subdiagonal.
    pub fn cholesky(&self) -> (&[f64], &[f64]) {
        (&self.chol_diag, &self.chol_sub)
    }

    /// `K u` over all nodes (boundary rows included).
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for (e, k) in self.elem.iter().enumerate() {
            let d = k * (u[e + 1] - u[e]);
            out[e] -= d;
            out[e + 1] += d;
        }
        out
    }

    /// `|S³| ∫ g φ_a r³ dr` for every node `a`.
    pub fn load_fn(&self, g: impl Fn(f64) -> f64) -> Vec<f64> {
        self.load_gauss(|_, r, _| g(r))
    }

    /// Load vector with the integrand supplied per Gauss point as
    /// `g(element, r, t)`, `t` the local coordinate in `[0, 1]`.
    pub fn load_gauss(&self, mut g: impl FnMut(usize, f64, f64) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        for_each_gauss_point(self.nodes(), |e, r, w, t| {
            let v = SPHERE3_AREA * w * r * r * r * g(e, r, t);
            out[e] += v * (1.0 - t);
            out[e + 1] += v * t;
        });
        out
    }

    /// Load of a sampled function, interpolated linearly between nodes.
    pub fn load_samples(&self, g: &[f64]) -> Vec<f64> {
        self.load_gauss(|e, _, t| g[e] * (1.0 - t) + g[e + 1] * t)
    }

    /// Solves `K v = rhs` on the interior nodes with `v = 0` on the boundary.
    /// Boundary entries of `rhs` are ignored.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let ni = self.interior();
        let mut y = rhs[1..=ni].to_vec();
        self.chol_forward(&mut y);
        self.chol_backward(&mut y);
        let mut v = Vec::with_capacity(ni + 2);
        v.push(0.0);
        v.extend_from_slice(&y);
        v.push(0.0);
        v
    }

    /// `y ← L⁻¹ y` on interior-length vectors.
    pub(crate) fn chol_forward(&self, y: &mut [f64]) {
        for i in 0..y.len() {
            if i > 0 {
                y[i] -= self.chol_sub[i - 1] * y[i - 1];
            }
            y[i] /= self.chol_diag[i];
        }
    }

    /// `y ← L⁻ᵀ y` on interior-length vectors.
    pub(crate) fn chol_backward(&self, y: &mut [f64]) {
        let n = y.len();
        for i in (0..n).rev() {
            if i + 1 < n {
                y[i] -= self.chol_sub[i] * y[i + 1];
            }
            y[i] /= self.chol_diag[i];
        }
    }

    /// `y ← Lᵀ y` on interior-length vectors.
    pub(crate) fn chol_transpose_apply(&self, y: &mut [f64]) {
        let n = y.len();
        for i in 0..n {
            y[i] *= self.chol_diag[i];
            if i + 1 < n {
                y[i] += self.chol_sub[i] * y[i + 1];
            }
        }
    }

    /// Dual norm `sqrt(Fᵀ K⁻¹ F)` of a weak residual, i.e. the H¹ norm of its
    /// Riesz representative.
    pub fn dual_norm(&self, f: &[f64]) -> f64 {
        let ni = self.interior();
        let mut y = f[1..=ni].to_vec();
        self.chol_forward(&mut y);
        y.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Galerkin projection of a bubble: the discrete solution of `−Δv = U³`
    /// with zero trace.
    pub fn projected_bubble(&self, b: Bubble) -> Vec<f64> {
        self.solve(&self.load_fn(|r| b.eval(r).powi(3)))
    }

    /// `∂/∂δ` of [`Fem::projected_bubble`].
    pub fn projected_dbubble(&self, b: Bubble) -> Vec<f64> {
        self.solve(&self.load_fn(|r| 3.0 * b.eval(r).powi(2) * b.eval_ddelta(r)))
    }

    pub fn grid(&self, values: Vec<f64>) -> Result<RadialGridFunction> {
        RadialGridFunction::new(self.mesh.clone(), values)
    }
}

/// The adjoint `I*`: weak solution of `−Δv = g` in the annulus with zero
/// trace, `g` interpolated linearly between nodes.
pub fn dirichlet_solve(g: &RadialGridFunction, eps: f64, r_outer: f64) -> Result<RadialGridFunction> {
    let mesh = g.mesh();
    let tol = 1e-12;
    if (mesh.inner() - eps).abs() > tol * eps || (mesh.outer() - r_outer).abs() > tol * r_outer {
        return Err(Error::MeshMismatch);
    }
    let fem = Fem::new(mesh.clone())?;
    let v = fem.solve(&fem.load_samples(g.values()));
    fem.grid(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bubbles::project_bubble;
    use crate::quadrature::{build_mesh, h1_inner, h1_norm, DEFAULT_POINTS_PER_DECADE};
    use approx::assert_relative_eq;

    fn setup(eps: f64, delta: f64) -> Fem {
        let mesh = build_mesh(eps, 1.0, &[delta], DEFAULT_POINTS_PER_DECADE).unwrap();
        Fem::new(Arc::new(mesh)).unwrap()
    }

    #[test]
    fn dirichlet_solve_reproduces_projected_bubble() {
        let (eps, delta) = (1e-3, 0.1);
        let fem = setup(eps, delta);
        let b = Bubble::new(delta).unwrap();
        let g = RadialGridFunction::sample(fem.mesh().clone(), |r| b.eval(r).powi(3)).unwrap();
        let v = dirichlet_solve(&g, eps, 1.0).unwrap();
        let p = project_bubble(b, eps, 1.0).unwrap();
        let exact = RadialGridFunction::sample(fem.mesh().clone(), |r| p.eval(r)).unwrap();
        let diff = fem.grid(v.values().iter().zip(exact.values()).map(|(a, b)| a - b).collect()).unwrap();
        assert!(h1_norm(&diff) < 5e-3 * h1_norm(&exact));
        assert_eq!(v.values()[0], 0.0);
        assert_eq!(*v.values().last().unwrap(), 0.0);
    }

    #[test]
    fn zero_and_linearity() {
        let fem = setup(1e-4, 1e-2);
        let zero = RadialGridFunction::zeros(fem.mesh().clone());
        assert!(dirichlet_solve(&zero, 1e-4, 1.0).unwrap().values().iter().all(|&v| v == 0.0));
        let g1 = RadialGridFunction::sample(fem.mesh().clone(), |r| (1.0 + r).recip()).unwrap();
        let g2 = RadialGridFunction::sample(fem.mesh().clone(), |r| r.sin()).unwrap();
        let sum = fem.grid(g1.values().iter().zip(g2.values()).map(|(a, b)| a + b).collect()).unwrap();
        let v1 = dirichlet_solve(&g1, 1e-4, 1.0).unwrap();
        let v2 = dirichlet_solve(&g2, 1e-4, 1.0).unwrap();
        let vs = dirichlet_solve(&sum, 1e-4, 1.0).unwrap();
        for i in 0..vs.values().len() {
            let s = v1.values()[i] + v2.values()[i];
            assert!((vs.values()[i] - s).abs() <= 1e-12 * (1.0 + s.abs()));
        }
        assert!(dirichlet_solve(&g1, 2e-4, 1.0).is_err());
    }

    #[test]
    fn cholesky_factor_reproduces_stiffness() {
        let fem = setup(1e-3, 0.05);
        let ni = fem.interior();
        let x: Vec<f64> = (0..ni).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let mut full = vec![0.0];
        full.extend_from_slice(&x);
        full.push(0.0);
        let kx = fem.apply(&full);
        let mut y = x.clone();
        fem.chol_transpose_apply(&mut y);
        // L (Lᵀ x)
        let (d, s) = fem.cholesky();
        let lx: Vec<f64> = (0..ni).map(|i| d[i] * y[i] + if i > 0 { s[i - 1] * y[i - 1] } else { 0.0 }).collect();
        for i in 0..ni {
            assert_relative_eq!(lx[i], kx[i + 1], max_relative = 1e-10, epsilon = 1e-8);
        }
    }

    #[test]
    fn dual_norm_matches_h1_of_solution() {
        let fem = setup(1e-4, 1e-2);
        let f = fem.load_fn(|r| (-r).exp() * 1e3);
        let v = fem.grid(fem.solve(&f)).unwrap();
        assert_relative_eq!(fem.dual_norm(&f), h1_norm(&v), max_relative = 1e-10);
        assert_relative_eq!(h1_inner(&v, &v).unwrap(), fem.dual_norm(&f).powi(2), max_relative = 1e-10);
    }
}
