//! Run configuration, experiment commands, persisted records, plots and the
//! consolidated report.

mod commands;
mod config;
mod plot;
mod record;

pub use commands::{
    cmd_constants, cmd_minimize, cmd_report, cmd_solve, cmd_sweep, cmd_verify_lemma, write_sweep_csv, CommandOutput,
};
pub use config::{
    Domain, NamedRates, Physics, Quadrature, RateChoice, Rates, RunConfig, Solver, Sweep, Tolerances, Tower,
};
pub use plot::{write_svg, Mark, Series};
pub use record::{
    load_records, ConstantsOutput, MinimizeOutput, Output, RunRecord, SolvePoint, SweepOutput, Timing, Verdict,
    TOOL_VERSION,
};
