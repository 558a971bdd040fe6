//! `sdlab`: batch drivers for the sparse-domination and weighted-norm experiments.
//!
//! Exit status: 0 when every declared criterion passes, 1 for usage and
//! configuration errors, 2 when a criterion fails, 3 for internal defects.

mod artifacts;
mod commands;
mod config;
mod gridio;

use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use sdlab_core::error::Error;

use crate::artifacts::{Artifacts, Check};
use crate::config::{parse_settings, RunConfig, KEYS};

#[derive(Parser)]
#[command(version, about = "Sparse domination, A_p weights and rough singular integrals on grids")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

/// Settings as `key=value` or `--key value`; `config=PATH` reads a file first.
#[derive(clap::Args)]
struct Settings {
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "SETTING")]
    settings: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Random trials of both covering lemmas with exact containment checks
    GridCheck(Settings),
    /// A_p, A_∞ and mixed characteristics of a weight family, with a brute-force oracle
    Weights(Settings),
    /// Littlewood–Paley pieces of a kernel: multiplier decay and kernel estimates
    Decompose(Settings),
    /// Sparse collection for one input, with sparseness and domination reports
    Sparse(Settings),
    /// Weighted operator norms with iteration histories
    NormProbe(Settings),
    /// Piecewise interpolation between the unweighted and the bumped weight
    BumpChain(Settings),
    /// Growth of the piece series under the dyadic and identity schedules
    ScheduleCompare(Settings),
    /// Weighted norms against the A_2 characteristic
    A2Growth(Settings),
    /// Pointwise Cotlar constant under grid refinement
    Cotlar(Settings),
    /// Weak (1,1) ratio under grid refinement
    Weak11(Settings),
    /// Recompute the calibration constants
    Calibrate(Settings),
    /// List every configuration key
    Keys,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    GridCheck,
    Weights,
    Decompose,
    Sparse,
    NormProbe,
    BumpChain,
    ScheduleCompare,
    A2Growth,
    Cotlar,
    Weak11,
    Calibrate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::GridCheck => "grid-check",
            Command::Weights => "weights",
            Command::Decompose => "decompose",
            Command::Sparse => "sparse",
            Command::NormProbe => "norm-probe",
            Command::BumpChain => "bump-chain",
            Command::ScheduleCompare => "schedule-compare",
            Command::A2Growth => "a2-growth",
            Command::Cotlar => "cotlar",
            Command::Weak11 => "weak11",
            Command::Calibrate => "calibrate",
        }
    }
}

/// Failure of a run, mapped onto the exit status.
pub enum Failure {
    Usage(String),
    /// A numerical procedure gave up; reported as a failed criterion.
    Stalled(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(_) | Error::InvalidResolution(_) | Error::LevelOutOfWindow { .. } => {
                Failure::Usage(e.to_string())
            }
            Error::NonConvergence { .. } | Error::DoublingCap { .. } => Failure::Stalled(e.to_string()),
            Error::Internal(_) => Failure::Internal(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Internal(format!("writing artifacts: {e}"))
    }
}

/// What a subcommand hands back: its declared criteria.
pub type Outcome = Result<Vec<Check>, Failure>;

fn run(cmd: Command, cfg: &RunConfig) -> Result<(Vec<Check>, Artifacts), Failure> {
    let mut art = Artifacts::create(cfg, cmd.name())?;
    let checks = match cmd {
        Command::GridCheck => commands::geometry::grid_check(cfg, &mut art),
        Command::Weights => commands::geometry::weights(cfg, &mut art),
        Command::Decompose => commands::decompose::decompose(cfg, &mut art),
        Command::Sparse => commands::sparse::sparse(cfg, &mut art),
        Command::NormProbe => commands::norms::norm_probe(cfg, &mut art),
        Command::BumpChain => commands::norms::bump_chain(cfg, &mut art),
        Command::ScheduleCompare => commands::norms::schedule_compare(cfg, &mut art),
        Command::A2Growth => commands::norms::a2_growth(cfg, &mut art),
        Command::Cotlar => commands::appendix::cotlar(cfg, &mut art),
        Command::Weak11 => commands::appendix::weak11(cfg, &mut art),
        Command::Calibrate => commands::calibrate(cfg, &mut art),
    }?;
    Ok((checks, art))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let shown = e.print().is_ok();
            let info = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            return ExitCode::from(if info && shown { 0 } else { 1 });
        }
    };
    let (cmd, settings) = match cli.command {
        Cmd::GridCheck(s) => (Command::GridCheck, s),
        Cmd::Weights(s) => (Command::Weights, s),
        Cmd::Decompose(s) => (Command::Decompose, s),
        Cmd::Sparse(s) => (Command::Sparse, s),
        Cmd::NormProbe(s) => (Command::NormProbe, s),
        Cmd::BumpChain(s) => (Command::BumpChain, s),
        Cmd::ScheduleCompare(s) => (Command::ScheduleCompare, s),
        Cmd::A2Growth(s) => (Command::A2Growth, s),
        Cmd::Cotlar(s) => (Command::Cotlar, s),
        Cmd::Weak11(s) => (Command::Weak11, s),
        Cmd::Calibrate(s) => (Command::Calibrate, s),
        Cmd::Keys => {
            for (k, help) in KEYS {
                println!("{k:<16} {help}");
            }
            return ExitCode::SUCCESS;
        }
    };
    let cfg = match parse_settings(&settings.settings).and_then(|s| RunConfig::resolve(cmd, &s)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("sdlab {}: invalid configuration: {e}", cmd.name());
            return ExitCode::from(1);
        }
    };

    let t = Instant::now();
    match run(cmd, &cfg) {
        Ok((checks, art)) => {
            println!("sdlab {} (config {})", cmd.name(), &art.hash()[..12]);
            for c in &checks {
                println!("  {} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            for p in art.written() {
                println!("  wrote {}", p.display());
            }
            println!("  {:.1}s", t.elapsed().as_secs_f64());
            let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
            if failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                eprintln!("sdlab {}: criterion failed: {}", cmd.name(), failed.join(", "));
                ExitCode::from(2)
            }
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("sdlab {}: {msg}", cmd.name());
            ExitCode::from(1)
        }
        Err(Failure::Stalled(msg)) => {
            eprintln!("sdlab {}: criterion failed: convergence: {msg}", cmd.name());
            ExitCode::from(2)
        }
        Err(Failure::Internal(msg)) => {
            eprintln!("sdlab {}: internal defect: {msg}", cmd.name());
            ExitCode::from(3)
        }
    }
}
