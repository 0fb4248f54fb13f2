//! Graded radial meshes and 4-D radial quadrature.
//!
//! Every integral over the annulus `{eps < |x| < R}` of a radial function is
//! reduced to `|S³| ∫ g(r) r³ dr`. Closed-form integrands go through
//! [`integrate_fn`] (composite Gauss–Legendre per mesh interval), sampled ones
//! through the trapezoid rule or the exact P1 forms.

mod mesh;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use mesh::{build_mesh, log_mesh, GradedMesh, DEFAULT_POINTS_PER_DECADE};

use crate::bubbles::SPHERE3_AREA;
use crate::error::{Error, Result};

/// 5-point Gauss–Legendre rule on [-1, 1].
pub(crate) const GAUSS_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
pub(crate) const GAUSS_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Calls `visit(r, w)` for every Gauss point of every interval of `nodes`,
/// with `w` the quadrature weight for `dr` (no `r³` or `|S³|` factor).
pub(crate) fn for_each_gauss_point(nodes: &[f64], mut visit: impl FnMut(usize, f64, f64, f64)) {
    for (e, w) in nodes.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, wt) in GAUSS_NODES.iter().zip(GAUSS_WEIGHTS.iter()) {
            let r = mid + half * x;
            // local P1 coordinate in [0, 1]
            let t = 0.5 * (1.0 + x);
            visit(e, r, half * wt, t);
        }
    }
}

/// `|S³| ∫ f(r) r³ dr` over the span of `nodes`.
pub fn integrate_fn(nodes: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mut acc = 0.0;
    for_each_gauss_point(nodes, |_, r, w, _| acc += w * f(r) * r * r * r);
    SPHERE3_AREA * acc
}

/// Like [`integrate_fn`] but rejects non-finite integrand values.
pub fn try_integrate_fn(nodes: &[f64], f: impl Fn(f64) -> f64) -> Result<f64> {
    let mut acc = 0.0;
    let mut bad = None;
    for_each_gauss_point(nodes, |e, r, w, _| {
        let v = f(r);
        if !v.is_finite() && bad.is_none() {
            bad = Some((e, r));
        }
        acc += w * v * r * r * r;
    });
    match bad {
        Some((index, radius)) => Err(Error::NonFinite { index, radius }),
        None => Ok(SPHERE3_AREA * acc),
    }
}

/// A radial function sampled at the nodes of a mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGridFunction {
    mesh: Arc<GradedMesh>,
    values: Vec<f64>,
}

impl RadialGridFunction {
    pub fn new(mesh: Arc<GradedMesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.len() {
            return Err(Error::MeshMismatch);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index,
                radius: mesh.nodes()[index],
            });
        }
        Ok(Self { mesh, values })
    }

    /// Samples `f` at the mesh nodes.
    pub fn sample(mesh: Arc<GradedMesh>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = mesh.nodes().iter().map(|&r| f(r)).collect();
        Self::new(mesh, values)
    }

    pub fn zeros(mesh: Arc<GradedMesh>) -> Self {
        let values = vec![0.0; mesh.len()];
        Self { mesh, values }
    }

    pub fn mesh(&self) -> &Arc<GradedMesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// P1 interpolation.
    pub fn eval(&self, r: f64) -> f64 {
        let nodes = self.mesh.nodes();
        let e = self.mesh.locate(r);
        let t = (r - nodes[e]) / (nodes[e + 1] - nodes[e]);
        self.values[e] * (1.0 - t) + self.values[e + 1] * t
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            mesh: self.mesh.clone(),
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    pub fn same_mesh(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh) || self.mesh == other.mesh
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// `|S³| ∫ u(r) r³ dr` by the trapezoid rule on the samples.
pub fn integrate_samples(u: &RadialGridFunction) -> f64 {
    let nodes = u.mesh.nodes();
    let v = &u.values;
    let mut acc = 0.0;
    for i in 0..nodes.len() - 1 {
        let (a, b) = (nodes[i], nodes[i + 1]);
        acc += 0.5 * (b - a) * (v[i] * a.powi(3) + v[i + 1] * b.powi(3));
    }
    SPHERE3_AREA * acc
}

/// Dirichlet inner product `∫ ∇u·∇v` with piecewise-constant derivatives.
pub fn h1_inner(u: &RadialGridFunction, v: &RadialGridFunction) -> Result<f64> {
    if !u.same_mesh(v) {
        return Err(Error::MeshMismatch);
    }
    Ok(h1_inner_raw(u.mesh.nodes(), &u.values, &v.values))
}

pub fn h1_norm(u: &RadialGridFunction) -> f64 {
    h1_inner_raw(u.mesh.nodes(), &u.values, &u.values).max(0.0).sqrt()
}

pub(crate) fn h1_inner_raw(nodes: &[f64], u: &[f64], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..nodes.len() - 1 {
        let (a, b) = (nodes[i], nodes[i + 1]);
        let h = b - a;
        acc += (u[i + 1] - u[i]) * (v[i + 1] - v[i]) * (b.powi(4) - a.powi(4)) / (4.0 * h * h);
    }
    SPHERE3_AREA * acc
}

/// Weighted `L^p` norm over the annulus, trapezoid on `|u|^p r³`.
pub fn lp_norm(u: &RadialGridFunction, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return crate::error::invalid(format!("L^p norm needs p >= 1, got {p}"));
    }
    let pow = RadialGridFunction {
        mesh: u.mesh.clone(),
        values: u.values.iter().map(|x| x.abs().powf(p)).collect(),
    };
    Ok(integrate_samples(&pow).powf(1.0 / p))
}

/// Weighted `L^p` norm of a closed-form function.
pub fn lp_norm_fn(nodes: &[f64], p: f64, f: impl Fn(f64) -> f64) -> f64 {
    integrate_fn(nodes, |r| f(r).abs().powf(p)).powf(1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bubbles::{Bubble, UniversalConstants};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn volume_of_unit_ball() {
        let m = log_mesh(1e-8, 1.0, 64).unwrap();
        let v = integrate_fn(m.nodes(), |_| 1.0);
        assert_relative_eq!(v, std::f64::consts::PI.powi(2) / 2.0, max_relative = 1e-13);
    }

    #[test]
    fn bubble_fourth_power_gives_b() {
        let m = log_mesh(1e-6, 1e3, 64).unwrap();
        let u = Bubble::new(1.0).unwrap();
        let v = integrate_fn(m.nodes(), |r| u.eval(r).powi(4));
        let b = UniversalConstants::closed_form().b;
        assert_relative_eq!(v, b, max_relative = 1e-6);
        // the sampled route agrees to trapezoid accuracy
        let g = RadialGridFunction::sample(Arc::new(m), |r| u.eval(r)).unwrap();
        assert_relative_eq!(lp_norm(&g, 4.0).unwrap().powi(4), b, max_relative = 1e-3);
    }

    #[test]
    fn linearity() {
        let m = log_mesh(1e-3, 1.0, 32).unwrap();
        let f = |r: f64| (-r).exp();
        let g = |r: f64| r.sin();
        let lhs = integrate_fn(m.nodes(), |r| 2.0 * f(r) - 3.0 * g(r));
        let rhs = 2.0 * integrate_fn(m.nodes(), f) - 3.0 * integrate_fn(m.nodes(), g);
        assert_relative_eq!(lhs, rhs, max_relative = 1e-13);
    }

    #[test]
    fn gauss_rule_converges_fast() {
        // f(r) = r^3 e^{-r} against r^3 weight on [1e-3, 10]
        let exact = {
            let m = log_mesh(1e-3, 10.0, 1024).unwrap();
            integrate_fn(m.nodes(), |r| r.powi(3) * (-r).exp())
        };
        let mut prev = f64::INFINITY;
        for ppd in [2, 4, 8] {
            let m = log_mesh(1e-3, 10.0, ppd).unwrap();
            let err = (integrate_fn(m.nodes(), |r| r.powi(3) * (-r).exp()) - exact).abs() / exact;
            assert!(err * 8.0 <= prev || err < 1e-13, "ppd {ppd}: {err:e} vs {prev:e}");
            prev = err;
        }
    }

    #[test]
    fn non_finite_rejected() {
        let m = log_mesh(1e-3, 1.0, 8).unwrap();
        assert!(try_integrate_fn(m.nodes(), |r| if r > 0.5 { f64::NAN } else { 1.0 }).is_err());
        let mesh = Arc::new(m);
        let mut vals = vec![0.0; mesh.len()];
        vals[3] = f64::INFINITY;
        assert!(RadialGridFunction::new(mesh, vals).is_err());
    }

    #[test]
    fn h1_inner_basics() {
        let mesh = Arc::new(log_mesh(1e-3, 1.0, 32).unwrap());
        let z = RadialGridFunction::zeros(mesh.clone());
        assert_eq!(h1_inner(&z, &z).unwrap(), 0.0);
        let u = RadialGridFunction::sample(mesh.clone(), |r| (r - 1e-3) * (1.0 - r)).unwrap();
        let v = RadialGridFunction::sample(mesh.clone(), |r| (r - 1e-3) * (1.0 - r) * r).unwrap();
        assert_relative_eq!(
            h1_inner(&u.scaled(2.5), &v).unwrap(),
            2.5 * h1_inner(&u, &v).unwrap(),
            max_relative = 1e-13
        );
        assert_relative_eq!(h1_inner(&u, &v).unwrap(), h1_inner(&v, &u).unwrap(), max_relative = 1e-14);
        let other = Arc::new(log_mesh(1e-3, 1.0, 16).unwrap());
        assert!(h1_inner(&u, &RadialGridFunction::zeros(other)).is_err());
    }

    #[test]
    fn h1_positive_on_random_zero_trace() {
        let mesh = Arc::new(log_mesh(1e-4, 1.0, 16).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let mut vals: Vec<f64> = (0..mesh.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            vals[0] = 0.0;
            *vals.last_mut().unwrap() = 0.0;
            let u = RadialGridFunction::new(mesh.clone(), vals).unwrap();
            assert!(h1_inner(&u, &u).unwrap() > 0.0);
        }
    }

    #[test]
    fn holder_inequality() {
        let mesh = Arc::new(log_mesh(1e-3, 1.0, 32).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let (a, b, c) = (rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0), rng.gen_range(-2.0..2.0));
            let u = RadialGridFunction::sample(mesh.clone(), |r| a * (b * r).sin() + c).unwrap();
            let v = RadialGridFunction::sample(mesh.clone(), |r| (c * r).exp() / (a + r)).unwrap();
            let uv = RadialGridFunction::new(
                mesh.clone(),
                u.values().iter().zip(v.values()).map(|(x, y)| x * y).collect(),
            )
            .unwrap();
            let lhs = lp_norm(&uv, 2.0).unwrap();
            let rhs = lp_norm(&u, 4.0).unwrap() * lp_norm(&v, 4.0).unwrap();
            assert!(lhs <= rhs * (1.0 + 1e-12));
        }
        assert_eq!(lp_norm(&RadialGridFunction::zeros(mesh), 3.0).unwrap(), 0.0);
    }
}
