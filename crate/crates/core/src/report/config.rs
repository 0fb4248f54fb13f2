use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bubbles::{Partition, TowerConfig};
use crate::error::{invalid, Error, Result};
use crate::quadrature::DEFAULT_POINTS_PER_DECADE;
use crate::reduced::optimal_rates;
use crate::solver::{NewtonOptions, MIN_EPS};

/// A run description, read from TOML.
///
/// ```toml
/// seed = 7
///
/// [domain]
/// R = 1.0
/// eps = 1e-5
///
/// [sweep]
/// eps_list = [1e-6, 1e-7, 1e-8]
///
/// [tower]
/// k = 2
/// m = 2
/// partition = [[1], [2]]   # optional: bubble j goes to component (j-1) mod m
///
/// [physics]
/// beta = -1.0
/// mu = [1.0, 1.0]
///
/// [rates]
/// d = "star"               # or explicit coefficients, e.g. [1.0, 0.9]
///
/// [solver]
/// tol = 1e-10
///
/// [quadrature]
/// points_per_decade = 64
///
/// [tolerances]             # see `Tolerances` for every key and default
/// mesh_doubling = 0.005
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Output directory; the command line may override it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    pub domain: Domain,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    pub tower: Tower,
    pub physics: Physics,
    #[serde(default)]
    pub rates: Rates,
    #[serde(default)]
    pub solver: Solver,
    #[serde(default)]
    pub quadrature: Quadrature,
    #[serde(default)]
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    #[serde(rename = "R")]
    pub r_outer: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    /// Strictly decreasing hole radii.
    pub eps_list: Vec<f64>,
    /// Also compute the smallest singular values of the linearisation at
    /// every sweep point.
    #[serde(default = "yes")]
    pub spectrum: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tower {
    pub k: usize,
    pub m: usize,
    /// Groups of 1-based bubble indices, one per component.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physics {
    pub beta: f64,
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NamedRates {
    /// The minimiser of the reduced energy.
    Star,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateChoice {
    Named(NamedRates),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rates {
    pub d: RateChoice,
    /// Admissible coefficients lie in `(eta, 1/eta)`.
    #[serde(default = "default_eta")]
    pub eta: f64,
}

fn default_eta() -> f64 {
    0.1
}

impl Default for Rates {
    fn default() -> Self {
        Self {
            d: RateChoice::Named(NamedRates::Star),
            eta: default_eta(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Solver {
    pub tol: f64,
    pub max_iters: usize,
    pub min_step: f64,
    pub armijo: f64,
}

impl Default for Solver {
    fn default() -> Self {
        let o = NewtonOptions::default();
        Self {
            tol: o.tol,
            max_iters: o.max_iters,
            min_step: o.min_step,
            armijo: o.armijo,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Quadrature {
    pub points_per_decade: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Self {
            points_per_decade: DEFAULT_POINTS_PER_DECADE,
        }
    }
}

/// Every tolerance behind a verdict, with its default.
///
/// | key | default | checks |
/// |---|---|---|
/// | `constants_rel` | 1e-8 | quadrature `A`, `B`, `Γ` against closed forms |
/// | `constants_identity` | 1e-10 | `A = α₄/γ₄` and `A²γ₄ = Γ` |
/// | `psi_gradient` | 1e-10 | `‖∇Ψ(x*)‖ / Ψ(x*)` |
/// | `multistart_agreement` | 1e-8 | numeric minimisers against `x*` |
/// | `rates_formula` | 1e-12 | explicit `d*` formula against `√x*` |
/// | `multistart_count` | 20 | random starts of the numeric minimiser |
/// | `newton_max_iters` | 15 | Newton iterations for a direct solve |
/// | `corrector_slope_slack` | 0.1 | `log‖φ‖` slope must reach `1/(k+1)` minus this |
/// | `sigma_factor` | 2.0 | spread of the projected smallest singular value |
/// | `unprojected_decay` | 10.0 | required decay of the unprojected one |
/// | `mesh_doubling` | 0.005 | change of fitted rates when `ppd` doubles |
/// | `lemma` | none | overrides the band of every lemma report |
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub constants_rel: f64,
    pub constants_identity: f64,
    pub psi_gradient: f64,
    pub multistart_agreement: f64,
    pub rates_formula: f64,
    pub multistart_count: usize,
    pub newton_max_iters: usize,
    pub corrector_slope_slack: f64,
    pub sigma_factor: f64,
    pub unprojected_decay: f64,
    pub mesh_doubling: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lemma: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            constants_rel: 1e-8,
            constants_identity: 1e-10,
            psi_gradient: 1e-10,
            multistart_agreement: 1e-8,
            rates_formula: 1e-12,
            multistart_count: 20,
            newton_max_iters: 15,
            corrector_slope_slack: 0.1,
            sigma_factor: 2.0,
            unprojected_decay: 10.0,
            mesh_doubling: 0.005,
            lemma: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::InvalidInput(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Record(format!("config: {e}")))
    }

    /// The `k = 2`, `β = −1` competitive tower on the unit ball.
    pub fn k2_default() -> Self {
        Self {
            seed: 0,
            out: None,
            domain: Domain {
                r_outer: 1.0,
                eps: Some(1e-5),
            },
            sweep: Some(Sweep {
                eps_list: vec![1e-6, 1e-7, 1e-8],
                spectrum: true,
            }),
            tower: Tower {
                k: 2,
                m: 2,
                partition: None,
            },
            physics: Physics {
                beta: -1.0,
                mu: vec![1.0, 1.0],
            },
            rates: Rates::default(),
            solver: Solver::default(),
            quadrature: Quadrature::default(),
            tolerances: Tolerances::default(),
        }
    }

    pub fn partition(&self) -> Partition {
        let groups = self.tower.partition.clone().unwrap_or_else(|| {
            (0..self.tower.m)
                .map(|i| (1..=self.tower.k).filter(|j| (j - 1) % self.tower.m == i).collect())
                .collect()
        });
        Partition::new(self.tower.k, groups)
    }

    /// Resolves `rates.d`.
    pub fn rate_coefficients(&self) -> Result<Vec<f64>> {
        match &self.rates.d {
            RateChoice::Values(d) => Ok(d.clone()),
            // a single bubble has no interaction term, so the coupling does not enter
            RateChoice::Named(NamedRates::Star) if self.tower.k == 1 => optimal_rates(1, -1.0, self.domain.r_outer),
            RateChoice::Named(NamedRates::Star) => optimal_rates(self.tower.k, self.physics.beta, self.domain.r_outer),
        }
    }

    /// Tower configuration at hole radius `eps`.
    pub fn tower_config(&self, eps: f64) -> Result<TowerConfig> {
        TowerConfig::new(
            self.domain.r_outer,
            eps,
            self.partition(),
            self.physics.beta,
            self.physics.mu.clone(),
            self.rate_coefficients()?,
            self.rates.eta,
        )
    }

    /// Hole radius of a single solve.
    pub fn eps(&self) -> Result<f64> {
        match (self.domain.eps, &self.sweep) {
            (Some(e), _) => Ok(e),
            (None, Some(s)) if !s.eps_list.is_empty() => Ok(s.eps_list[0]),
            _ => invalid("config sets neither domain.eps nor sweep.eps_list"),
        }
    }

    pub fn eps_list(&self) -> Result<Vec<f64>> {
        match (&self.sweep, self.domain.eps) {
            (Some(s), _) => Ok(s.eps_list.clone()),
            (None, Some(e)) => Ok(vec![e]),
            (None, None) => invalid("config sets neither domain.eps nor sweep.eps_list"),
        }
    }

    pub fn newton_options(&self) -> NewtonOptions {
        NewtonOptions {
            tol: self.solver.tol,
            max_iters: self.solver.max_iters,
            min_step: self.solver.min_step,
            armijo: self.solver.armijo,
            points_per_decade: self.quadrature.points_per_decade,
            ..NewtonOptions::default()
        }
    }

    /// Checks everything that can be checked before a solve: the partition,
    /// the envelope, and admissibility of every configured `eps`.
    pub fn validate(&self) -> Result<()> {
        self.partition().validate()?;
        if self.physics.mu.len() != self.tower.m {
            return invalid(format!(
                "physics.mu has {} entries for m = {}",
                self.physics.mu.len(),
                self.tower.m
            ));
        }
        let eps_all: Vec<f64> = self
            .domain
            .eps
            .iter()
            .copied()
            .chain(self.sweep.iter().flat_map(|s| s.eps_list.iter().copied()))
            .collect();
        if eps_all.is_empty() {
            return invalid("config sets neither domain.eps nor sweep.eps_list");
        }
        if let Some(s) = &self.sweep {
            if s.eps_list.windows(2).any(|w| !(w[1] < w[0])) {
                return invalid("sweep.eps_list must be strictly decreasing");
            }
        }
        if let Some(e) = eps_all.iter().find(|&&e| !(e >= MIN_EPS)) {
            return Err(Error::Envelope(format!("eps = {e:e} below {MIN_EPS:e}")));
        }
        for &e in &eps_all {
            self.tower_config(e)?;
        }
        self.newton_options().validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
seed = 3

[domain]
R = 1.0
eps = 1e-5

[sweep]
eps_list = [1e-6, 1e-7]

[tower]
k = 2
m = 2

[physics]
beta = -1.0
mu = [1.0, 1.0]

[rates]
d = "star"

[tolerances]
mesh_doubling = 0.01
"#;

    #[test]
    fn parses_and_round_trips() {
        let cfg = RunConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.tolerances.mesh_doubling, 0.01);
        assert_eq!(cfg.tolerances.newton_max_iters, 15);
        let once = cfg.to_toml_string().unwrap();
        let again = RunConfig::from_toml_str(&once).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.to_toml_string().unwrap(), once);
    }

    #[test]
    fn explicit_rates_and_full_precision() {
        let s = SAMPLE.replace("d = \"star\"", "d = [1.0490000000000001, 0.95318429]");
        let cfg = RunConfig::from_toml_str(&s).unwrap();
        assert_eq!(cfg.rate_coefficients().unwrap(), vec![1.0490000000000001, 0.95318429]);
    }

    #[test]
    fn star_rates_resolve_to_minimiser() {
        let cfg = RunConfig::from_toml_str(SAMPLE).unwrap();
        let d = cfg.rate_coefficients().unwrap();
        assert!((d[0] - 1.04911506).abs() < 1e-7 && (d[1] - 0.95318429).abs() < 1e-7);
    }

    #[test]
    fn rejects_bad_configs() {
        let consecutive = SAMPLE.replace("m = 2", "m = 2\npartition = [[1, 2], []]");
        assert!(RunConfig::from_toml_str(&consecutive).is_err());
        let tiny = SAMPLE.replace("eps_list = [1e-6, 1e-7]", "eps_list = [1e-6, 1e-10]");
        assert!(matches!(RunConfig::from_toml_str(&tiny), Err(Error::Envelope(_))));
        let increasing = SAMPLE.replace("eps_list = [1e-6, 1e-7]", "eps_list = [1e-7, 1e-6]");
        assert!(RunConfig::from_toml_str(&increasing).is_err());
        let unknown = SAMPLE.replace("seed = 3", "seed = 3\ncolour = 1");
        assert!(RunConfig::from_toml_str(&unknown).is_err());
    }

    #[test]
    fn default_partition_is_round_robin() {
        let mut cfg = RunConfig::k2_default();
        cfg.tower.k = 4;
        cfg.rates.d = RateChoice::Values(vec![1.0; 4]);
        assert_eq!(cfg.partition().groups, vec![vec![1, 3], vec![2, 4]]);
    }
}
