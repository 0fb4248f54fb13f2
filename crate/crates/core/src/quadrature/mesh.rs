use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Default number of nodes per decade of radius.
pub const DEFAULT_POINTS_PER_DECADE: usize = 64;

/// Half-width (multiplicative) of the refinement window placed around each scale.
const WINDOW_FACTOR: f64 = 5.0;

/// A strictly increasing set of radii on `[eps, R]`, log-uniform away from the
/// concentration scales and twice as dense around each of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradedMesh {
    nodes: Vec<f64>,
    scales: Vec<f64>,
    points_per_decade: usize,
}

impl GradedMesh {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn points_per_decade(&self) -> usize {
        self.points_per_decade
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn inner(&self) -> f64 {
        self.nodes[0]
    }

    pub fn outer(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Number of nodes in the closed interval `[lo, hi]`.
    pub fn count_in(&self, lo: f64, hi: f64) -> usize {
        self.nodes.iter().filter(|&&r| r >= lo && r <= hi).count()
    }

    /// Index of the element containing `r` (clamped to the mesh).
    pub fn locate(&self, r: f64) -> usize {
        let n = self.nodes.len();
        match self.nodes.binary_search_by(|x| x.total_cmp(&r)) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        }
    }
}

/// `n` log-uniform intervals on `[a, b]`, endpoints included.
fn log_grid(a: f64, b: f64, per_decade: f64) -> Vec<f64> {
    let decades = (b / a).log10();
    let n = ((per_decade * decades).ceil() as usize).max(1);
    let ratio = (b / a).ln() / n as f64;
    let mut out: Vec<f64> = (0..=n).map(|i| a * (ratio * i as f64).exp()).collect();
    out[0] = a;
    out[n] = b;
    out
}

/// Builds the graded mesh: a log-uniform grid with `points_per_decade` nodes
/// per decade on `[eps, R]`, refined to at least twice that density on
/// `[s/5, 5s]` for every scale `s`.
pub fn build_mesh(eps: f64, r_outer: f64, scales: &[f64], points_per_decade: usize) -> Result<GradedMesh> {
    if !(eps > 0.0 && eps < r_outer && r_outer.is_finite()) {
        return invalid(format!("mesh needs 0 < eps < R, got eps={eps:e}, R={r_outer:e}"));
    }
    if points_per_decade == 0 {
        return invalid("points_per_decade must be positive");
    }
    if let Some(s) = scales.iter().find(|&&s| !(s > eps && s < r_outer)) {
        return invalid(format!("scale {s:e} outside ({eps:e}, {r_outer:e})"));
    }
    let ppd = points_per_decade as f64;

    // Refinement windows, clipped to the domain and merged where they overlap.
    let mut windows: Vec<(f64, f64, f64)> = scales
        .iter()
        .map(|&s| {
            let lo = (s / WINDOW_FACTOR).max(eps);
            let hi = (s * WINDOW_FACTOR).min(r_outer);
            // [s/3, 3s] must keep at least `ppd` nodes even when clipped.
            let core = ((3.0 * s).min(r_outer) / (s / 3.0).max(eps)).log10();
            let density = (2.0 * ppd).max(1.05 * ppd / core);
            (lo, hi, density)
        })
        .collect();
    windows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64, f64)> = Vec::new();
    for w in windows {
        match merged.last_mut() {
            Some(last) if w.0 <= last.1 => {
                last.1 = last.1.max(w.1);
                last.2 = last.2.max(w.2);
            }
            _ => merged.push(w),
        }
    }

    let coarse_step = (10f64).ln() / ppd;
    let mut nodes: Vec<f64> = log_grid(eps, r_outer, ppd)
        .into_iter()
        .filter(|&r| {
            merged.iter().all(|&(lo, hi, dens)| {
                // keep coarse nodes clear of the window edges
                let guard = 0.5 * (10f64).ln() / dens;
                r.ln() < lo.ln() - guard || r.ln() > hi.ln() + guard
            })
        })
        .collect();
    for &(lo, hi, dens) in &merged {
        nodes.extend(log_grid(lo, hi, dens));
    }
    nodes.sort_by(f64::total_cmp);
    let mut deduped: Vec<f64> = Vec::with_capacity(nodes.len());
    for r in nodes {
        match deduped.last() {
            Some(&prev) if (r / prev).ln() < 1e-3 * coarse_step => {}
            _ => deduped.push(r),
        }
    }
    // the endpoints are exact
    let last = deduped.len() - 1;
    deduped[0] = eps;
    deduped[last] = r_outer;

    Ok(GradedMesh {
        nodes: deduped,
        scales: scales.to_vec(),
        points_per_decade,
    })
}

/// Plain log-uniform mesh without refinement windows.
pub fn log_mesh(a: f64, b: f64, points_per_decade: usize) -> Result<GradedMesh> {
    build_mesh(a, b, &[], points_per_decade)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_invariants(m: &GradedMesh) {
        let nodes = m.nodes();
        assert!(nodes.windows(2).all(|w| w[0] < w[1]));
        let ppd = m.points_per_decade();
        // every full decade holds at least ppd nodes
        let (a, b) = (m.inner(), m.outer());
        let mut lo = a;
        while lo * 10.0 <= b {
            assert!(m.count_in(lo, lo * 10.0) >= ppd, "decade at {lo:e}");
            lo *= 1.37;
        }
        for &s in m.scales() {
            let n = m.count_in((s / 3.0).max(a), (3.0 * s).min(b));
            assert!(n >= ppd, "scale {s:e} has {n} nodes");
        }
    }

    #[test]
    fn six_decades_without_scales() {
        let m = build_mesh(1e-6, 1.0, &[], 64).unwrap();
        assert!(m.len() >= 6 * 64);
        assert_eq!(m.inner(), 1e-6);
        assert_eq!(m.outer(), 1.0);
        assert_invariants(&m);
    }

    #[test]
    fn refined_around_two_scales() {
        let m = build_mesh(1e-6, 1.0, &[1e-2, 1e-4], 64).unwrap();
        assert_invariants(&m);
        assert!(m.count_in(1e-2 / 3.0, 3e-2) >= 2 * 64 * 9f64.log10() as usize);
    }

    #[test]
    fn scale_near_boundary_keeps_density() {
        let m = build_mesh(1e-3, 1.0, &[0.9, 1.5e-3], 32).unwrap();
        assert_invariants(&m);
    }

    #[test]
    fn deterministic() {
        let a = build_mesh(1e-7, 1.0, &[3e-3, 2e-5], 64).unwrap();
        let b = build_mesh(1e-7, 1.0, &[3e-3, 2e-5], 64).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_scale_outside_domain() {
        assert!(build_mesh(1e-4, 1.0, &[2.0], 64).is_err());
        assert!(build_mesh(1e-4, 1.0, &[1e-5], 64).is_err());
        assert!(build_mesh(1.0, 1e-4, &[], 64).is_err());
    }

    #[test]
    fn locate_brackets() {
        let m = log_mesh(1e-3, 1.0, 16).unwrap();
        for &r in &[1e-3, 2e-3, 0.5, 1.0] {
            let e = m.locate(r);
            assert!(m.nodes()[e] <= r && r <= m.nodes()[e + 1]);
        }
    }
}
