use std::fmt;

use serde::{Deserialize, Serialize};

use super::fit::ExponentFit;
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepParameter {
    Eps,
    DeltaRatio,
    Delta,
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Eps => "eps",
            Self::DeltaRatio => "delta-ratio",
            Self::Delta => "delta",
        })
    }
}

/// A geometric sequence of values for one swept parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

impl SweepSpec {
    pub fn new(parameter: SweepParameter, values: Vec<f64>) -> Result<Self> {
        let s = Self { parameter, values };
        s.validate()?;
        Ok(s)
    }

    /// `start · ratio^i` for `i = 0..n`.
    pub fn geometric(parameter: SweepParameter, start: f64, ratio: f64, n: usize) -> Result<Self> {
        Self::new(parameter, (0..n).map(|i| start * ratio.powi(i as i32)).collect())
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() < 4 {
            return invalid(format!("a sweep needs at least 4 points, got {}", self.values.len()));
        }
        if self.values.iter().any(|v| !(*v > 0.0)) {
            return invalid("sweep values must be positive");
        }
        let q = self.values[1] / self.values[0];
        if self
            .values
            .windows(2)
            .any(|w| ((w[1] / w[0]) / q - 1.0).abs() > 1e-9)
        {
            return invalid("sweep values must be geometrically spaced");
        }
        Ok(())
    }
}

/// Outcome of one asymptotic check: the sweep data, an optional exponent fit,
/// and the compared statistic with its target and tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    pub name: String,
    /// Acceptance criterion this report instantiates.
    pub criterion: u32,
    pub parameter: String,
    pub xs: Vec<f64>,
    pub measured: Vec<f64>,
    pub fit: Option<ExponentFit>,
    /// Abscissa dropped from the regression window, if any.
    pub excluded: Option<f64>,
    /// What is compared against `target` (a fitted exponent, a ratio, ...).
    pub statistic: String,
    pub observed: f64,
    pub target: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub notes: Vec<String>,
}

impl AsymptoticReport {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        criterion: u32,
        parameter: impl Into<String>,
        xs: Vec<f64>,
        measured: Vec<f64>,
        statistic: impl Into<String>,
        observed: f64,
        target: f64,
        tolerance: f64,
    ) -> Self {
        Self {
            name: name.into(),
            criterion,
            parameter: parameter.into(),
            xs,
            measured,
            fit: None,
            excluded: None,
            statistic: statistic.into(),
            observed,
            target,
            tolerance,
            passed: (observed - target).abs() <= tolerance,
            notes: Vec::new(),
        }
    }

    pub fn with_fit(mut self, fit: ExponentFit, excluded: Option<f64>) -> Self {
        if let Some(x) = excluded {
            self.notes.push(format!(
                "largest sweep point {x:e} excluded from the regression window (residual above 2%)"
            ));
        }
        self.fit = Some(fit);
        self.excluded = excluded;
        self
    }

    pub fn note(mut self, s: impl Into<String>) -> Self {
        self.notes.push(s.into());
        self
    }

    /// Re-evaluates the band verdict with a different tolerance, keeping any
    /// failed extra condition.
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        let extra_failed = self.notes.iter().any(|n| n.starts_with("failed: "));
        self.tolerance = tolerance;
        self.passed = (self.observed - self.target).abs() <= tolerance && !extra_failed;
        self
    }

    /// Adds an extra condition that must hold besides the band.
    pub fn require(mut self, ok: bool, why: impl Into<String>) -> Self {
        if !ok {
            self.passed = false;
            self.notes.push(format!("failed: {}", why.into()));
        }
        self
    }
}

impl fmt::Display for AsymptoticReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {} (criterion {}): {} = {:.6} target {:.6} ± {:.3}",
            if self.passed { "pass" } else { "FAIL" },
            self.name,
            self.criterion,
            self.statistic,
            self.observed,
            self.target,
            self.tolerance
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_validation() {
        assert!(SweepSpec::geometric(SweepParameter::Eps, 1e-3, 0.1, 5).is_ok());
        assert!(SweepSpec::geometric(SweepParameter::Eps, 1e-3, 0.1, 3).is_err());
        assert!(SweepSpec::new(SweepParameter::Delta, vec![1.0, 0.5, 0.2, 0.1]).is_err());
    }

    #[test]
    fn verdict_from_band() {
        let r = AsymptoticReport::new("x", 5, "delta", vec![], vec![], "exponent", 1.04, 1.0, 0.05);
        assert!(r.passed);
        let r = r.require(false, "extra");
        assert!(!r.passed);
        let r = AsymptoticReport::new("x", 5, "delta", vec![], vec![], "exponent", 1.06, 1.0, 0.05);
        assert!(!r.passed);
    }
}
