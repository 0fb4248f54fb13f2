//! Named lemma sweeps with their default parameters.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::fit_exponent_windowed;
use super::lemmas::{
    interaction_integral, interaction_pair, lq_bubble_norm, mixed_pq_interaction, projection_l2_error,
    single_bubble_energy, triple_interaction,
};
use super::remainder::remainder_norm;
use super::report::{AsymptoticReport, SweepParameter, SweepSpec};
use crate::bubbles::{projection_expansion_constant, projection_expansion_error, Bubble, Partition, TowerConfig};
use crate::error::{Error, Result};
use crate::quadrature::DEFAULT_POINTS_PER_DECADE;
use crate::reduced::optimal_rates;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Lemma {
    #[serde(rename = "A1-expansion")]
    A1Expansion,
    #[serde(rename = "A2-l2error")]
    A2L2Error,
    #[serde(rename = "A3-lq")]
    A3Lq,
    #[serde(rename = "A4-pq")]
    A4Pq,
    #[serde(rename = "A5-pair")]
    A5Pair,
    #[serde(rename = "A6-triple")]
    A6Triple,
    #[serde(rename = "single-energy")]
    SingleEnergy,
    #[serde(rename = "interaction-constant")]
    InteractionConstant,
    #[serde(rename = "remainder-norm")]
    RemainderNorm,
}

impl Lemma {
    pub const ALL: [Lemma; 9] = [
        Lemma::A1Expansion,
        Lemma::A2L2Error,
        Lemma::A3Lq,
        Lemma::A4Pq,
        Lemma::A5Pair,
        Lemma::A6Triple,
        Lemma::SingleEnergy,
        Lemma::InteractionConstant,
        Lemma::RemainderNorm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Lemma::A1Expansion => "A1-expansion",
            Lemma::A2L2Error => "A2-l2error",
            Lemma::A3Lq => "A3-lq",
            Lemma::A4Pq => "A4-pq",
            Lemma::A5Pair => "A5-pair",
            Lemma::A6Triple => "A6-triple",
            Lemma::SingleEnergy => "single-energy",
            Lemma::InteractionConstant => "interaction-constant",
            Lemma::RemainderNorm => "remainder-norm",
        }
    }

    fn valid_names() -> String {
        Self::ALL.iter().map(|l| l.name()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for Lemma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Lemma {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::UnknownLemma {
                name: s.to_string(),
                valid: Self::valid_names(),
            })
    }
}

/// Optional changes to a lemma's default sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaOverrides {
    pub values: Option<Vec<f64>>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub points_per_decade: usize,
}

impl Default for LemmaOverrides {
    fn default() -> Self {
        Self {
            values: None,
            p: None,
            q: None,
            points_per_decade: DEFAULT_POINTS_PER_DECADE,
        }
    }
}

fn sweep(overrides: &LemmaOverrides, parameter: SweepParameter, default: Vec<f64>) -> Result<SweepSpec> {
    SweepSpec::new(parameter, overrides.values.clone().unwrap_or(default))
}

fn decades(hi_exp: i32, lo_exp: i32) -> Vec<f64> {
    (lo_exp..=hi_exp).rev().map(|e| 10f64.powi(e)).collect()
}

fn par_map(xs: &[f64], f: impl Fn(f64) -> Result<f64> + Sync) -> Result<Vec<f64>> {
    xs.par_iter().map(|&x| f(x)).collect()
}

fn exponent_report(
    name: &str,
    criterion: u32,
    spec: &SweepSpec,
    measured: Vec<f64>,
    with_log: bool,
    target: f64,
    tolerance: f64,
) -> Result<AsymptoticReport> {
    let (fit, excluded) = fit_exponent_windowed(&spec.values, &measured, with_log)?;
    Ok(AsymptoticReport::new(
        name,
        criterion,
        spec.parameter.to_string(),
        spec.values.clone(),
        measured,
        if with_log { "fitted exponent (log-corrected)" } else { "fitted exponent" },
        fit.exponent,
        target,
        tolerance,
    )
    .with_fit(fit, excluded))
}

/// Runs the default (or overridden) sweep of a lemma.
pub fn verify_lemma(lemma: Lemma, overrides: &LemmaOverrides) -> Result<Vec<AsymptoticReport>> {
    let ppd = overrides.points_per_decade;
    match lemma {
        Lemma::A1Expansion => {
            let spec = sweep(overrides, SweepParameter::Delta, vec![0.1, 0.05, 0.025, 0.0125, 0.00625])?;
            let measured = par_map(&spec.values, |d| projection_expansion_error(Bubble::new(d)?, d.powi(3), 1.0))?;
            let (delta, eps) = (0.05, 1e-4);
            let b = Bubble::new(delta)?;
            let err = projection_expansion_error(b, eps, 1.0)?;
            let budget = 10.0 * delta * (delta * delta + (eps / delta).powi(2));
            let c = projection_expansion_constant(b, eps, 1.0)?;
            let slope = exponent_report("A1-expansion", 2, &spec, measured, false, 3.0, 0.2)?
                .note("sweep uses eps = delta^3");
            let bound = AsymptoticReport::new(
                "A1-expansion-bound",
                2,
                "delta",
                vec![delta],
                vec![err],
                "sup residual over [2eps, R] / (10 delta (delta^2 + (eps/delta)^2))",
                err / budget,
                0.5,
                0.5,
            )
            .note(format!(
                "smallest C in the pointwise bound C delta [eps^2(1+eps delta^-3)/r^2 + delta^2 + (eps/delta)^2]: {c:.4}"
            ));
            Ok(vec![bound, slope])
        }
        Lemma::A2L2Error => {
            let spec = sweep(overrides, SweepParameter::Delta, vec![0.1, 0.05, 0.025, 0.0125, 0.00625, 0.003125])?;
            let measured = par_map(&spec.values, |d| projection_l2_error(d, d * d, 1.0, ppd))?;
            Ok(vec![exponent_report("A2-l2error", 5, &spec, measured, true, 4.0, 0.2)?
                .note("sweep uses eps = delta^2")])
        }
        Lemma::A3Lq => {
            let spec = sweep(overrides, SweepParameter::Delta, decades(-1, -4))?;
            let qs: Vec<f64> = match overrides.q {
                Some(q) => vec![q],
                None => vec![1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0],
            };
            qs.iter()
                .map(|&q| {
                    let measured = par_map(&spec.values, |d| lq_bubble_norm(d, q, 1.0, ppd))?;
                    let name = format!("A3-lq(q={q})");
                    if (q - 2.0).abs() < 1e-12 {
                        let normalised: Vec<f64> = spec
                            .values
                            .iter()
                            .zip(&measured)
                            .map(|(d, v)| v / (d * d * d.ln().abs()))
                            .collect();
                        let (lo, hi) = normalised
                            .iter()
                            .fold((f64::INFINITY, 0.0f64), |(l, h), &v| (l.min(v), h.max(v)));
                        Ok(exponent_report(&name, 5, &spec, measured, true, 2.0, 0.1)?
                            .require(hi <= 2.0 * lo, "value / (delta^2 |log delta|) varies by more than a factor 2"))
                    } else {
                        let target = if q < 2.0 { q } else if q < 4.0 { 4.0 - q } else { 0.0 };
                        let mut r = exponent_report(&name, 5, &spec, measured, false, target, 0.05)?;
                        if q >= 4.0 {
                            r = r.note("q = 4: bounded, exponent 0");
                        }
                        Ok(r)
                    }
                })
                .collect()
        }
        Lemma::A4Pq => {
            let (p, q) = (overrides.p.unwrap_or(8.0 / 3.0), overrides.q.unwrap_or(4.0 / 3.0));
            let spec = sweep(overrides, SweepParameter::DeltaRatio, decades(-1, -4))?;
            let rho1 = 0.1;
            let pairs: Vec<(f64, f64)> = spec
                .values
                .par_iter()
                .map(|&t| mixed_pq_interaction(rho1, rho1 * t, p, q, 1e-3 * rho1 * t, 1.0, ppd))
                .collect::<Result<_>>()?;
            let (fwd, bwd): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            Ok(vec![
                exponent_report("A4-pq(forward)", 5, &spec, fwd, false, q, 0.07)?,
                exponent_report("A4-pq(reverse)", 5, &spec, bwd, false, q, 0.07)?,
            ])
        }
        Lemma::A5Pair => {
            let spec = sweep(overrides, SweepParameter::DeltaRatio, decades(-1, -4))?;
            let rho1 = 0.1;
            let measured = par_map(&spec.values, |t| interaction_integral(rho1 * t, rho1, 1e-3 * rho1 * t, 1.0, ppd, false))?;
            Ok(vec![exponent_report("A5-pair", 5, &spec, measured, true, 2.0, 0.1)?.note(
                "tests the sharp law (rho2/rho1)^2 log(R/rho2); the first-power bound is weaker",
            )])
        }
        Lemma::A6Triple => {
            let spec = sweep(overrides, SweepParameter::DeltaRatio, decades(-1, -4))?;
            let (rho1, inner) = (0.1, 0.1);
            let measured = par_map(&spec.values, |t| {
                let rho2 = rho1 * t;
                let rho3 = rho2 * inner;
                triple_interaction(rho1, rho2, rho3, 1e-3 * rho3, 1.0, ppd)
            })?;
            Ok(vec![exponent_report("A6-triple", 5, &spec, measured, false, 4.0 / 3.0, 0.1)?
                .note("rho3/rho2 held at 0.1 while rho2/rho1 is swept")])
        }
        Lemma::SingleEnergy => {
            let spec = sweep(overrides, SweepParameter::Delta, vec![0.1, 0.05, 0.025, 0.0125])?;
            let eps = 1e-4;
            let ratios = par_map(&spec.values, |d| Ok(single_bubble_energy(d, eps, 1.0, ppd)?.ratio))?;
            let at = single_bubble_energy(0.05, eps, 1.0, ppd)?;
            Ok(vec![AsymptoticReport::new(
                "single-energy",
                3,
                "delta",
                spec.values.clone(),
                ratios,
                "(E - B/4)/(model - B/4) at delta=0.05, eps=1e-4",
                at.ratio,
                1.0,
                0.05,
            )])
        }
        Lemma::InteractionConstant => {
            let spec = sweep(overrides, SweepParameter::DeltaRatio, vec![1e1, 1e2, 1e3, 1e4])?;
            let delta_j = 0.1;
            let eps = 1e-6;
            let ratios = par_map(&spec.values, |t| Ok(interaction_pair(delta_j / t, delta_j, eps, 1.0, ppd)?.ratio))?;
            let at = |t: f64| interaction_pair(delta_j / t, delta_j, eps, 1.0, ppd).map(|p| p.ratio);
            let (r3, r4) = (at(1e3)?, at(1e4)?);
            Ok(vec![AsymptoticReport::new(
                "interaction-constant",
                4,
                "delta-ratio",
                spec.values.clone(),
                ratios,
                "measured / model at delta_j/delta_i = 1e3",
                r3,
                1.0,
                0.1,
            )
            .note(format!("ratio at 1e4: {r4:.6}"))
            .require((r4 - 1.0).abs() < (r3 - 1.0).abs(), "ratio not closer to 1 at 1e4 than at 1e3")])
        }
        Lemma::RemainderNorm => {
            let spec = sweep(overrides, SweepParameter::Eps, decades(-3, -7))?;
            let d = optimal_rates(2, -1.0, 1.0)?;
            let base = TowerConfig::new(1.0, spec.values[0], Partition::odd_even(2), -1.0, vec![1.0, 1.0], d, 0.1)?;
            let measured = par_map(&spec.values, |eps| Ok(remainder_norm(&base.with_eps(eps)?, ppd)?.total))?;
            let (fit, excluded) = super::fit::fit_exponent_windowed(&spec.values, &measured, false)?;
            Ok(vec![AsymptoticReport::new(
                "remainder-norm",
                6,
                "eps",
                spec.values.clone(),
                measured,
                "log-log slope of |R| vs eps",
                fit.exponent,
                1.0 / 3.0,
                0.05,
            )
            .with_fit(fit, excluded)])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for l in Lemma::ALL {
            assert_eq!(l.name().parse::<Lemma>().unwrap(), l);
        }
        match "nope".parse::<Lemma>() {
            Err(Error::UnknownLemma { valid, .. }) => assert!(valid.contains("A4-pq")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pq_override_validated() {
        let o = LemmaOverrides {
            p: Some(3.0),
            q: Some(1.5),
            ..Default::default()
        };
        assert!(verify_lemma(Lemma::A4Pq, &o).is_err());
    }
}
