use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::asymptotics::AsymptoticReport;
use crate::bubbles::UniversalConstants;
use crate::error::{Error, Result};
use crate::reduced::{Minimizer, PsiCoefficients, ReducedPoint};
use crate::solver::{CorrectorNorm, LinearizationSpectrum, RateFit, SystemState};

/// Version stamped on every record.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One pass/fail statement tied to an acceptance criterion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion: u32,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(criterion: u32, name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            criterion,
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] criterion {:>2} {}: {}",
            if self.passed { "pass" } else { "FAIL" },
            self.criterion,
            self.name,
            self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub label: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsOutput {
    pub computed: UniversalConstants,
    pub closed_form: UniversalConstants,
    /// Relative errors of `A`, `B`, `Γ`.
    pub rel_errors: [f64; 3],
    /// Relative gaps of `A = α₄/γ₄` and `A²γ₄ = Γ`.
    pub identity_gaps: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOutput {
    pub coefficients: PsiCoefficients,
    pub closed_form: Minimizer,
    pub psi_value: f64,
    pub gradient_norm: f64,
    pub hessian_spectrum: Vec<f64>,
    pub multistart: Vec<ReducedPoint>,
    /// Largest relative distance of a multistart minimiser to `x*`.
    pub multistart_gap: f64,
}

/// Scalar summary of a solve, next to the full state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolvePoint {
    pub eps: f64,
    pub newton_iters: usize,
    pub residual_h1: f64,
    pub fit: RateFit,
    pub corrector: CorrectorNorm,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectrum: Option<LinearizationSpectrum>,
    /// Reduced energy of the ansatz at the configured rates.
    pub reduced_energy: f64,
    pub state: SystemState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutput {
    pub points: Vec<SolvePoint>,
    /// Rate coefficients the sweep converges toward.
    pub d_star: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Output {
    Constants(ConstantsOutput),
    Lemma { lemma: String, reports: Vec<AsymptoticReport> },
    Minimize(MinimizeOutput),
    Solve(Box<SolvePoint>),
    Sweep(SweepOutput),
}

/// Everything one command produced, persisted as a single JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub version: String,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<RunConfig>,
    pub output: Output,
    pub verdicts: Vec<Verdict>,
    pub timings: Vec<Timing>,
}

impl RunRecord {
    pub fn new(command: impl Into<String>, config: Option<RunConfig>, output: Output) -> Self {
        Self {
            version: TOOL_VERSION.to_string(),
            command: command.into(),
            config,
            output,
            verdicts: Vec::new(),
            timings: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Record(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Record(e.to_string()))
    }

    /// Same record with all wall-clock timings removed.
    pub fn without_timings(&self) -> Self {
        Self {
            timings: Vec::new(),
            ..self.clone()
        }
    }

    /// Writes `<dir>/<stem>.json`, never overwriting an earlier record.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let mut path = dir.join(format!("{stem}.json"));
        let mut n = 1;
        while path.exists() {
            path = dir.join(format!("{stem}-{n}.json"));
            n += 1;
        }
        fs::write(&path, self.to_json()?)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| Error::Record(format!("{}: {e}", path.display())))
    }
}

/// Every record in `dir`, sorted by file name. Any JSON file that is not a
/// record is an error.
pub fn load_records(dir: &Path) -> Result<Vec<(PathBuf, RunRecord)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.into_iter().map(|p| RunRecord::load(&p).map(|r| (p, r))).collect()
}
