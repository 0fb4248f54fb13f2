use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use fountain::asymptotics::LemmaOverrides;
use fountain::report::{
    cmd_constants, cmd_minimize, cmd_report, cmd_solve, cmd_sweep, cmd_verify_lemma, CommandOutput, RunConfig,
};

/// Bubble-tower laboratory: constants, asymptotic checks, reduced energy and
/// the discrete solver.
#[derive(Parser)]
#[command(name = "fountain", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML); the built-in k = 2 tower when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for records, tables and plots.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override quadrature.points_per_decade.
    #[arg(long)]
    ppd: Option<usize>,
    /// Override solver.tol.
    #[arg(long)]
    tol: Option<f64>,
    /// Override the random seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Universal constants by quadrature against their closed forms.
    Constants(Common),
    /// Run the sweep of a named asymptotic estimate.
    Verify {
        /// One of A1-expansion, A2-l2error, A3-lq, A4-pq, A5-pair, A6-triple,
        /// single-energy, interaction-constant, remainder-norm.
        lemma: String,
        /// Comma-separated sweep values replacing the default sweep.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        /// Exponent p for mixed interactions.
        #[arg(long)]
        p: Option<f64>,
        /// Exponent q for mixed interactions and the L^q norm check.
        #[arg(long)]
        q: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Minimise the reduced energy.
    Minimize(Common),
    /// Newton solve at domain.eps.
    Solve(Common),
    /// Continuation over sweep.eps_list.
    Sweep(Common),
    /// Summarise every record in a run directory.
    Report {
        /// Run directory; defaults to --out or `runs`.
        dir: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
        None => RunConfig::k2_default(),
    };
    if let Some(ppd) = c.ppd {
        cfg.quadrature.points_per_decade = ppd;
    }
    if let Some(tol) = c.tol {
        cfg.solver.tol = tol;
    }
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(c: &Common, cfg: Option<&RunConfig>) -> PathBuf {
    c.out
        .clone()
        .or_else(|| cfg.and_then(|x| x.out.clone()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn show(out: &CommandOutput) -> bool {
    for v in &out.record.verdicts {
        println!("{v}");
    }
    println!("record: {}", out.record_path.display());
    for f in &out.files {
        println!("wrote:  {}", f.display());
    }
    out.record.passed()
}

fn run(cli: Cli) -> Result<bool> {
    Ok(match cli.command {
        Command::Constants(c) => {
            let cfg = load_config(&c)?;
            show(&cmd_constants(&cfg.tolerances, &out_dir(&c, Some(&cfg)))?)
        }
        Command::Verify {
            lemma,
            values,
            p,
            q,
            common,
        } => {
            let cfg = load_config(&common)?;
            let overrides = LemmaOverrides {
                values,
                p,
                q,
                points_per_decade: cfg.quadrature.points_per_decade,
            };
            show(&cmd_verify_lemma(&lemma, &overrides, &cfg.tolerances, &out_dir(&common, Some(&cfg)))?)
        }
        Command::Minimize(c) => {
            let cfg = load_config(&c)?;
            show(&cmd_minimize(&cfg, &out_dir(&c, Some(&cfg)))?)
        }
        Command::Solve(c) => {
            let cfg = load_config(&c)?;
            show(&cmd_solve(&cfg, &out_dir(&c, Some(&cfg)))?)
        }
        Command::Sweep(c) => {
            let cfg = load_config(&c)?;
            show(&cmd_sweep(&cfg, &out_dir(&c, Some(&cfg)))?)
        }
        Command::Report { dir, common } => {
            let dir = dir.unwrap_or_else(|| out_dir(&common, None));
            print!("{}", cmd_report(Path::new(&dir))?);
            true
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
