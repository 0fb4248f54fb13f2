use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::config::{RunConfig, Tolerances};
use super::plot::{write_svg, Mark, Series};
use super::record::{
    load_records, ConstantsOutput, MinimizeOutput, Output, RunRecord, SolvePoint, SweepOutput, Timing, Verdict,
};
use crate::asymptotics::{loglog_slope, verify_lemma, AsymptoticReport, Lemma, LemmaOverrides};
use crate::bubbles::{compute_constants, TowerConfig, UniversalConstants};
use crate::error::{Error, Result};
use crate::reduced::{
    expansion_scale, minimizer_closed_form, psi_at_rates, psi_eval, psi_grad, psi_hess, psi_multistart,
    reduced_energy_eval, PsiCoefficients,
};
use crate::solver::{
    continuation_sweep, corrector_norm, extract_rates, newton_solve, projected_linearization_sigma_min,
    NewtonOptions, SystemState, MAX_PPD,
};

/// A persisted record and every file written alongside it.
#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub record: RunRecord,
    pub record_path: PathBuf,
    pub files: Vec<PathBuf>,
}

fn sci(v: &[f64]) -> String {
    format!("[{}]", v.iter().map(|x| format!("{x:.4e}")).collect::<Vec<_>>().join(", "))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn timed<T>(timings: &mut Vec<Timing>, label: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t = Instant::now();
    let out = f();
    timings.push(Timing {
        label: label.to_string(),
        seconds: t.elapsed().as_secs_f64(),
    });
    out
}

fn finish(mut record: RunRecord, timings: Vec<Timing>, out: &Path, stem: &str, files: Vec<PathBuf>) -> Result<CommandOutput> {
    record.timings = timings;
    let record_path = record.save(out, stem)?;
    Ok(CommandOutput {
        record,
        record_path,
        files,
    })
}

/// Quadrature values of the universal constants against their closed forms.
pub fn cmd_constants(tol: &Tolerances, out: &Path) -> Result<CommandOutput> {
    let mut timings = Vec::new();
    let computed = timed(&mut timings, "quadrature", || Ok(compute_constants()))?;
    let exact = UniversalConstants::closed_form();
    let rel_errors = [rel(computed.a, exact.a), rel(computed.b, exact.b), rel(computed.gamma, exact.gamma)];
    let identity_gaps = [
        rel(computed.alpha4 / computed.gamma4, computed.a),
        rel(computed.a * computed.a * computed.gamma4, computed.gamma),
    ];
    let mut record = RunRecord::new(
        "constants",
        None,
        Output::Constants(ConstantsOutput {
            computed,
            closed_form: exact,
            rel_errors,
            identity_gaps,
        }),
    );
    for (name, e) in ["A", "B", "Gamma"].iter().zip(rel_errors) {
        record.verdicts.push(Verdict::new(
            1,
            format!("{name} closed form"),
            e <= tol.constants_rel,
            format!("relative error {e:.3e} (tolerance {:.0e})", tol.constants_rel),
        ));
    }
    for (name, e) in ["A = alpha4/gamma4", "A^2 gamma4 = Gamma"].iter().zip(identity_gaps) {
        record.verdicts.push(Verdict::new(
            1,
            *name,
            e <= tol.constants_identity,
            format!("relative gap {e:.3e} (tolerance {:.0e})", tol.constants_identity),
        ));
    }
    finish(record, timings, out, "constants", Vec::new())
}

fn lemma_plot(report: &AsymptoticReport, path: &Path) -> Result<()> {
    let pts: Vec<(f64, f64)> = report.xs.iter().copied().zip(report.measured.iter().copied()).collect();
    let mut series = vec![Series::new("measured", pts.clone(), Mark::Points)];
    if let Some(fit) = &report.fit {
        let model = |x: f64| {
            fit.constant * x.powf(fit.exponent) * fit.log_power.map_or(1.0, |s| (1.0 / x).ln().powf(s))
        };
        series.push(Series::new(
            format!("fit: exponent {:.3}", fit.exponent),
            report.xs.iter().map(|&x| (x, model(x))).collect(),
            Mark::Line,
        ));
        if let Some(&(x0, y0)) = pts.last() {
            let slope = report.target;
            series.push(Series::new(
                format!("target slope {slope:.3}"),
                report.xs.iter().map(|&x| (x, y0 * (x / x0).powf(slope))).collect(),
                Mark::Dashed,
            ));
        }
    } else if report.xs.len() > 1 {
        let t = report.target;
        series.push(Series::new(
            format!("target {t:.3}"),
            report.xs.iter().map(|&x| (x, t)).collect(),
            Mark::Dashed,
        ));
    }
    write_svg(path, &report.name, &report.parameter, &report.statistic, true, &series)
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect()
}

/// Runs a named lemma sweep, persists its reports and draws one log–log plot
/// per report.
pub fn cmd_verify_lemma(name: &str, overrides: &LemmaOverrides, tol: &Tolerances, out: &Path) -> Result<CommandOutput> {
    let lemma: Lemma = name.parse()?;
    let mut timings = Vec::new();
    let mut reports = timed(&mut timings, lemma.name(), || verify_lemma(lemma, overrides))?;
    if let Some(t) = tol.lemma {
        reports = reports.into_iter().map(|r| r.with_tolerance(t)).collect();
    }
    fs::create_dir_all(out)?;
    let mut files = Vec::new();
    for r in &reports {
        if r.xs.len() > 1 {
            let path = out.join(format!("{}.svg", file_safe(&r.name)));
            lemma_plot(r, &path)?;
            files.push(path);
        }
    }
    let verdicts = reports
        .iter()
        .map(|r| {
            let detail = format!("{} = {:.6}, target {:.6} ± {}", r.statistic, r.observed, r.target, r.tolerance);
            let detail = r.notes.iter().filter(|n| n.starts_with("failed: ")).fold(detail, |d, n| format!("{d}; {n}"));
            Verdict::new(r.criterion, r.name.clone(), r.passed, detail)
        })
        .collect();
    let mut record = RunRecord::new(
        "verify",
        None,
        Output::Lemma {
            lemma: lemma.name().to_string(),
            reports,
        },
    );
    record.verdicts = verdicts;
    finish(record, timings, out, &format!("verify-{}", lemma.name()), files)
}

/// Closed-form and numeric minimisation of the reduced energy of `cfg`.
pub fn cmd_minimize(cfg: &RunConfig, out: &Path) -> Result<CommandOutput> {
    let tol = &cfg.tolerances;
    let mut timings = Vec::new();
    let c = PsiCoefficients::from_problem(cfg.tower.k, cfg.physics.beta, cfg.domain.r_outer)?;
    let closed = minimizer_closed_form(&c);
    let psi_value = psi_eval(&c, &closed.x)?;
    let gradient_norm = psi_grad(&c, &closed.x)?.iter().map(|g| g * g).sum::<f64>().sqrt();
    let hessian_spectrum: Vec<f64> = psi_hess(&c, &closed.x)?.symmetric_eigenvalues().iter().copied().collect();
    let multistart = timed(&mut timings, "multistart", || psi_multistart(&c, tol.multistart_count, cfg.seed))?;
    let multistart_gap = multistart
        .iter()
        .flat_map(|p| p.x.iter().zip(&closed.x).map(|(a, b)| rel(*a, *b)))
        .fold(0.0, f64::max);
    let mut record = RunRecord::new(
        "minimize",
        Some(cfg.clone()),
        Output::Minimize(MinimizeOutput {
            coefficients: c.clone(),
            closed_form: closed.clone(),
            psi_value,
            gradient_norm,
            hessian_spectrum: hessian_spectrum.clone(),
            multistart,
            multistart_gap,
        }),
    );
    record.verdicts = vec![
        Verdict::new(
            7,
            "gradient at closed-form minimiser",
            gradient_norm < tol.psi_gradient * psi_value,
            format!("|grad Psi(x*)| = {gradient_norm:.3e}, Psi(x*) = {psi_value:.6}"),
        ),
        Verdict::new(
            7,
            "numeric minimisers agree",
            multistart_gap < tol.multistart_agreement,
            format!("{} starts, largest relative gap {multistart_gap:.3e}", tol.multistart_count),
        ),
        Verdict::new(
            7,
            "explicit rate formula",
            closed.formula_gap < tol.rates_formula,
            format!("largest relative gap {:.3e}", closed.formula_gap),
        ),
        Verdict::new(
            7,
            "strict minimum",
            hessian_spectrum.iter().all(|&e| e > 0.0),
            format!("Hessian spectrum {}", sci(&hessian_spectrum)),
        ),
    ];
    finish(record, timings, out, "minimize", Vec::new())
}

/// Fit, corrector, optional spectrum and reduced-energy ratio of a solved
/// state.
fn summarise(state: SystemState, spectrum: bool, ppd: usize) -> Result<SolvePoint> {
    let fit = extract_rates(&state)?;
    let corrector = corrector_norm(&state, &fit)?;
    let spectrum = if spectrum {
        Some(projected_linearization_sigma_min(&state)?)
    } else {
        None
    };
    let cfg = &state.cfg;
    let j = reduced_energy_eval(cfg, ppd)?;
    let b = UniversalConstants::closed_form().b;
    let psi = psi_at_rates(cfg.k(), cfg.beta, cfg.r_outer, &cfg.d);
    let reduced_energy = (j - cfg.k() as f64 * b / 4.0) / expansion_scale(cfg.eps, cfg.k()) / psi;
    Ok(SolvePoint {
        eps: cfg.eps,
        newton_iters: state.newton_iters,
        residual_h1: state.residual_h1,
        fit,
        corrector,
        spectrum,
        reduced_energy,
        state,
    })
}

fn profile_plot(state: &SystemState, path: &Path) -> Result<()> {
    let nodes = state.mesh.nodes();
    let n = nodes.len();
    let series: Vec<Series> = state
        .u
        .iter()
        .enumerate()
        .map(|(i, u)| {
            let pts = nodes[1..n - 1].iter().copied().zip(u.values()[1..n - 1].iter().copied()).collect();
            Series::new(format!("u_{}", i + 1), pts, Mark::Line)
        })
        .collect();
    write_svg(path, &format!("profiles at eps = {:.1e}", state.cfg.eps), "r", "u_i(r)", true, &series)
}

fn solve_verdicts(p: &SolvePoint, opts: &NewtonOptions, tol: &Tolerances) -> Vec<Verdict> {
    vec![
        Verdict::new(
            9,
            "Newton converges",
            p.residual_h1 < opts.tol && p.newton_iters <= tol.newton_max_iters,
            format!(
                "{} iterations (limit {}), relative H1 residual {:.3e}",
                p.newton_iters, tol.newton_max_iters, p.residual_h1
            ),
        ),
        Verdict::new(9, "positive solution", true, "every interior nodal value is positive"),
    ]
}

/// Direct Newton solve at `domain.eps`, with a mesh-doubling check of the
/// fitted rates.
pub fn cmd_solve(cfg: &RunConfig, out: &Path) -> Result<CommandOutput> {
    cfg.validate()?;
    let tol = &cfg.tolerances;
    let opts = cfg.newton_options();
    let tower = cfg.tower_config(cfg.eps()?)?;
    let mut timings = Vec::new();
    let state = timed(&mut timings, "newton", || newton_solve(&tower, &opts))?;
    let point = summarise(state, false, opts.points_per_decade)?;
    let mut verdicts = solve_verdicts(&point, &opts, tol);
    if 2 * opts.points_per_decade <= MAX_PPD {
        let fine = NewtonOptions {
            points_per_decade: 2 * opts.points_per_decade,
            ..opts.clone()
        };
        let state = timed(&mut timings, "newton (doubled mesh)", || newton_solve(&tower, &fine))?;
        let d_fine = extract_rates(&state)?.d;
        let change = point.fit.d.iter().zip(&d_fine).map(|(a, b)| rel(*a, *b)).fold(0.0, f64::max);
        verdicts.push(Verdict::new(
            12,
            "mesh doubling",
            change < tol.mesh_doubling,
            format!("largest relative change of fitted d_j: {change:.3e}"),
        ));
    }
    fs::create_dir_all(out)?;
    let plot = out.join("solve-profiles.svg");
    profile_plot(&point.state, &plot)?;
    let mut record = RunRecord::new("solve", Some(cfg.clone()), Output::Solve(Box::new(point)));
    record.verdicts = verdicts;
    finish(record, timings, out, "solve", vec![plot])
}

fn sweep_verdicts(points: &[SolvePoint], d_star: &[f64], k: usize, tol: &Tolerances) -> Vec<Verdict> {
    let mut v = Vec::new();
    if points.len() < 2 {
        return v;
    }
    for j in 0..k {
        let gaps: Vec<f64> = points.iter().map(|p| (p.fit.d[j] - d_star[j]).abs()).collect();
        v.push(Verdict::new(
            10,
            format!("d_{} approaches d*", j + 1),
            gaps.windows(2).all(|w| w[1] < w[0]),
            format!("|d_{}^eps - d_{}*| = {}", j + 1, j + 1, sci(&gaps)),
        ));
    }
    let ratios: Vec<f64> = points.iter().map(|p| p.corrector.over_delta1).collect();
    v.push(Verdict::new(
        10,
        "corrector small against delta_1",
        ratios.windows(2).all(|w| w[1] < w[0]),
        format!("|phi|/delta_1 = {ratios:.4?}"),
    ));
    let eps: Vec<f64> = points.iter().map(|p| p.eps).collect();
    let norms: Vec<f64> = points.iter().map(|p| p.corrector.norm).collect();
    let floor = 1.0 / (k as f64 + 1.0) - tol.corrector_slope_slack;
    match loglog_slope(&eps, &norms) {
        Ok(s) => v.push(Verdict::new(
            10,
            "corrector decay rate",
            s >= floor,
            format!("slope of log|phi| against log eps {s:.4} (floor {floor:.4})"),
        )),
        Err(e) => v.push(Verdict::new(10, "corrector decay rate", false, e.to_string())),
    }
    let spectra: Vec<_> = points.iter().filter_map(|p| p.spectrum).collect();
    if spectra.len() == points.len() {
        let proj: Vec<f64> = spectra.iter().map(|s| s.projected).collect();
        let (lo, hi) = proj.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &x| (l.min(x), h.max(x)));
        v.push(Verdict::new(
            11,
            "projected linearisation stays invertible",
            lo > 0.0 && hi / lo < tol.sigma_factor,
            format!("sigma_min on the complement {}", sci(&proj)),
        ));
        let unproj: Vec<f64> = spectra.iter().map(|s| s.unprojected).collect();
        let decay = unproj[0] / unproj[unproj.len() - 1];
        v.push(Verdict::new(
            11,
            "unprojected linearisation degenerates",
            decay > tol.unprojected_decay,
            format!("sigma_min on the whole space {}, decay {decay:.1}x", sci(&unproj)),
        ));
    }
    v
}

/// Writes the flat per-point table of a sweep.
pub fn write_sweep_csv(path: &Path, points: &[SolvePoint], verdict_summary: &str) -> Result<()> {
    let k = points.first().map_or(0, |p| p.fit.deltas.len());
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Record(e.to_string()))?;
    let mut header: Vec<String> = vec!["eps".into()];
    header.extend((1..=k).map(|j| format!("delta_{j}")));
    header.extend((1..=k).map(|j| format!("d_{j}")));
    header.extend(
        ["phi_h1", "residual", "sigma_min", "sigma_min_unprojected", "reduced_energy_ratio", "verdicts"]
            .map(String::from),
    );
    w.write_record(&header).map_err(|e| Error::Record(e.to_string()))?;
    for p in points {
        let mut row = vec![format!("{:e}", p.eps)];
        row.extend(p.fit.deltas.iter().map(|x| format!("{x:e}")));
        row.extend(p.fit.d.iter().map(|x| format!("{x}")));
        row.push(format!("{:e}", p.corrector.norm));
        row.push(format!("{:e}", p.residual_h1));
        row.push(p.spectrum.map_or(String::new(), |s| format!("{:e}", s.projected)));
        row.push(p.spectrum.map_or(String::new(), |s| format!("{:e}", s.unprojected)));
        row.push(format!("{}", p.reduced_energy));
        row.push(verdict_summary.to_string());
        w.write_record(&row).map_err(|e| Error::Record(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn sweep_plots(points: &[SolvePoint], d_star: &[f64], out: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    if points.is_empty() {
        return Ok(files);
    }
    let eps: Vec<f64> = points.iter().map(|p| p.eps).collect();
    let mut series = Vec::new();
    for (j, &ds) in d_star.iter().enumerate() {
        series.push(Series::new(
            format!("d_{}^eps", j + 1),
            points.iter().map(|p| (p.eps, p.fit.d[j])).collect(),
            Mark::Line,
        ));
        series.push(Series::new(format!("d_{}*", j + 1), eps.iter().map(|&e| (e, ds)).collect(), Mark::Dashed));
    }
    let path = out.join("sweep-rates.svg");
    write_svg(&path, "fitted rate coefficients", "eps", "d_j", false, &series)?;
    files.push(path);
    let path = out.join("sweep-corrector.svg");
    write_svg(
        &path,
        "corrector norm",
        "eps",
        "|phi|_H1",
        true,
        &[Series::new("|phi|", points.iter().map(|p| (p.eps, p.corrector.norm)).collect(), Mark::Line)],
    )?;
    files.push(path);
    let path = out.join("sweep-profiles.svg");
    profile_plot(&points[points.len() - 1].state, &path)?;
    files.push(path);
    Ok(files)
}

/// Continuation over `sweep.eps_list`. A failing point ends the sweep; the
/// points solved before it are still persisted and the failure is recorded
/// as a failed verdict.
pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<CommandOutput> {
    cfg.validate()?;
    let tol = &cfg.tolerances;
    let opts = cfg.newton_options();
    let eps = cfg.eps_list()?;
    let base: TowerConfig = cfg.tower_config(eps[0])?;
    let spectrum = cfg.sweep.as_ref().is_none_or(|s| s.spectrum);
    let mut timings = Vec::new();
    let cont = timed(&mut timings, "continuation", || continuation_sweep(&base, &eps, &opts))?;
    let points = timed(&mut timings, "analysis", || {
        cont.points
            .into_iter()
            .map(|p| summarise(p.state, spectrum, opts.points_per_decade))
            .collect::<Result<Vec<_>>>()
    })?;
    let d_star = base.d.clone();
    let mut verdicts = sweep_verdicts(&points, &d_star, base.k(), tol);
    let failure = cont.failure.map(|e| e.to_string());
    if let Some(f) = &failure {
        verdicts.push(Verdict::new(10, "sweep completes", false, f.clone()));
    }
    fs::create_dir_all(out)?;
    let summary = if verdicts.iter().all(|v| v.passed) { "pass" } else { "fail" };
    let csv_path = out.join("sweep.csv");
    write_sweep_csv(&csv_path, &points, summary)?;
    let mut files = vec![csv_path];
    files.extend(sweep_plots(&points, &d_star, out)?);
    let mut record = RunRecord::new(
        "sweep",
        Some(cfg.clone()),
        Output::Sweep(SweepOutput {
            points,
            d_star,
            failure,
        }),
    );
    record.verdicts = verdicts;
    finish(record, timings, out, "sweep", files)
}

/// Consolidates every record of a run directory into `report.md` and
/// returns its text.
pub fn cmd_report(dir: &Path) -> Result<String> {
    let records = load_records(dir)?;
    if records.is_empty() {
        return Ok(format!("no records found in {}\n", dir.display()));
    }
    let mut text = String::from("# Run report\n\n");
    let mut versions: Vec<&str> = records.iter().map(|(_, r)| r.version.as_str()).collect();
    versions.sort_unstable();
    versions.dedup();
    if versions.len() > 1 {
        text.push_str(&format!(
            "**warning:** records come from different tool versions: {}\n\n",
            versions.join(", ")
        ));
    }

    text.push_str("## Verdicts\n\n| criterion | check | verdict | detail | record |\n|---|---|---|---|---|\n");
    let mut all: Vec<(&Verdict, String)> = records
        .iter()
        .flat_map(|(p, r)| {
            let file = p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
            r.verdicts.iter().map(move |v| (v, file.clone()))
        })
        .collect();
    all.sort_by_key(|(v, _)| v.criterion);
    for (v, file) in &all {
        text.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            v.criterion,
            v.name,
            if v.passed { "pass" } else { "FAIL" },
            v.detail.replace('|', "\\|"),
            file
        ));
    }
    let mut criteria: Vec<u32> = all.iter().map(|(v, _)| v.criterion).collect();
    criteria.dedup();
    text.push_str("\n| criterion | status |\n|---|---|\n");
    for c in criteria {
        let ok = all.iter().filter(|(v, _)| v.criterion == c).all(|(v, _)| v.passed);
        text.push_str(&format!("| {c} | {} |\n", if ok { "pass" } else { "FAIL" }));
    }

    let fits: Vec<&AsymptoticReport> = records
        .iter()
        .filter_map(|(_, r)| match &r.output {
            Output::Lemma { reports, .. } => Some(reports.iter()),
            _ => None,
        })
        .flatten()
        .collect();
    if !fits.is_empty() {
        text.push_str("\n## Asymptotic checks\n\n| check | statistic | observed | target | tolerance | constant |\n|---|---|---|---|---|---|\n");
        for r in fits {
            text.push_str(&format!(
                "| {} | {} | {:.5} | {:.5} | {} | {} |\n",
                r.name,
                r.statistic,
                r.observed,
                r.target,
                r.tolerance,
                r.fit.as_ref().map_or(String::from("-"), |f| format!("{:.4e}", f.constant))
            ));
        }
    }

    for (p, r) in &records {
        if let Output::Sweep(s) = &r.output {
            let k = s.d_star.len();
            text.push_str(&format!(
                "\n## Rate trajectory ({})\n\nd* = {:.8?}\n\n| eps |",
                p.display(),
                s.d_star
            ));
            for j in 1..=k {
                text.push_str(&format!(" d_{j} |"));
            }
            text.push_str(" |phi| | |phi|/delta_1 | sigma_min |\n|---|");
            text.push_str(&"---|".repeat(k + 3));
            text.push('\n');
            for pt in &s.points {
                text.push_str(&format!("| {:.1e} |", pt.eps));
                for d in &pt.fit.d {
                    text.push_str(&format!(" {d:.6} |"));
                }
                text.push_str(&format!(
                    " {:.4e} | {:.4} | {} |\n",
                    pt.corrector.norm,
                    pt.corrector.over_delta1,
                    pt.spectrum.map_or(String::from("-"), |x| format!("{:.4}", x.projected))
                ));
            }
            if let Some(f) = &s.failure {
                text.push_str(&format!("\nsweep stopped early: {f}\n"));
            }
        }
    }
    fs::write(dir.join("report.md"), &text)?;
    Ok(text)
}
