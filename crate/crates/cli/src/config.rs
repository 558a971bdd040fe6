//! `key = value` run configuration.
//!
//! Settings come from an optional config file (`config=PATH`) and then from
//! command-line overrides, later sources winning. Every key is validated
//! before any computation starts.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use sdlab_core::calibration::{parse_key_values, Calibration};
use sdlab_core::grid::Grid;
use sdlab_core::lpdecomp::Schedule;
use sdlab_core::operators::kernel::{KernelSpec, RadiiSet, SmoothDiniParams};
use sha2::{Digest, Sha256};

use crate::Command;

/// Field-level configuration problem, reported as a usage error.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn bad<T>(field: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError {
        field: field.into(),
        message: message.into(),
    })
}

pub const KEYS: &[(&str, &str)] = &[
    ("config", "path of a key = value file read before the command-line settings"),
    ("out", "output directory; artifacts go to <out>/<subcommand>/"),
    ("kernel", "odd1d, beurling:M, smooth-dini, smooth-dini:d2 or smooth-dini:PATH"),
    ("d", "dimension, 1 or 2 (defaults to the kernel's)"),
    ("n", "cells per side"),
    ("side", "side length L of the domain [-L/2, L/2)^d"),
    ("eps_min", "smallest truncation radius (default: one cell diagonal)"),
    ("rho", "ratio of the truncation ladder, in (1, 2]"),
    ("r_max", "largest truncation radius"),
    ("schedule", "dyadic, identity or custom:0,a,b,..."),
    ("family", "weight family; only 'power' (|x|^delta)"),
    ("deltas", "comma-separated exponents of the power family"),
    ("p", "Lebesgue exponent"),
    ("seed", "seed for every random choice"),
    ("trials", "random trials per dimension (grid-check)"),
    ("budget", "trial inputs for L^p lower bounds when p != 2"),
    ("j_max", "number of pieces"),
    ("powers", "comma-separated Beurling powers, must include 1"),
    ("lambdas", "comma-separated series parameters (schedule-compare)"),
    ("alpha", "series decay rate (default from the calibration)"),
    ("input", "grid function file (.bin or .csv) for sparse; random when absent"),
    ("radius", "support ball radius for sparse"),
    ("tests", "random test functions (cotlar, weak11)"),
    ("max_iter", "power iteration cap"),
    ("iter_tol", "power iteration relative tolerance"),
    ("calibration", "calibration file (default: the bundled one)"),
    ("oracle_tol", "PASS: relative gap to the brute-force A_p oracle"),
    ("scale_tol", "PASS: multiplier scale-invariance error"),
    ("envelope_min", "PASS: smallest admissible envelope exponent"),
    ("decay_slope_max", "PASS: largest admissible piece decay slope"),
    ("r2_min", "PASS: smallest admissible R²"),
    ("size_spread_max", "PASS: largest ratio of piece size constants"),
    ("eta", "PASS: sparseness parameter"),
    ("adjoint_tol", "PASS: relative adjoint mismatch"),
    ("series_tol", "PASS: distance of the fitted series exponents from 1 and 2"),
    ("exponent_max", "PASS: largest admissible A_2 growth exponent"),
    ("stability", "PASS: largest constant ratio between n and 2n"),
];

/// Fully resolved configuration of one run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub out: PathBuf,
    pub kernel_name: String,
    pub kernel: KernelSpec,
    pub grid: Grid,
    pub eps_min: f64,
    pub rho: f64,
    pub r_max: f64,
    pub schedule: Schedule,
    pub deltas: Vec<f64>,
    pub p: f64,
    pub seed: u64,
    pub trials: usize,
    pub budget: usize,
    pub j_max: usize,
    pub powers: Vec<u32>,
    pub lambdas: Vec<f64>,
    pub alpha: f64,
    pub input: Option<PathBuf>,
    pub radius: f64,
    pub tests: usize,
    pub max_iter: usize,
    pub iter_tol: f64,
    pub calibration: Calibration,
    pub oracle_tol: f64,
    pub scale_tol: f64,
    pub envelope_min: f64,
    pub decay_slope_max: f64,
    pub r2_min: f64,
    pub size_spread_max: f64,
    pub eta: f64,
    pub adjoint_tol: f64,
    pub series_tol: f64,
    pub exponent_max: f64,
    pub stability: f64,
    /// Every key with its effective value, as hashed into the artifacts.
    pub resolved: BTreeMap<String, String>,
}

/// Splits `key=value`, `--key value` and `--key=value` tokens.
pub fn parse_settings(tokens: &[String]) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    let mut it = tokens.iter();
    while let Some(t) = it.next() {
        let body = t.strip_prefix("--").unwrap_or(t);
        if let Some((k, v)) = body.split_once('=') {
            out.push((k.replace('-', "_"), v.to_string()));
        } else if t.starts_with("--") {
            match it.next() {
                Some(v) => out.push((body.replace('-', "_"), v.clone())),
                None => return bad(body, "missing value"),
            }
        } else {
            return bad(t, "expected key=value or --key value");
        }
    }
    Ok(out)
}

struct Source {
    map: BTreeMap<String, String>,
}

impl Source {
    fn get(&self, k: &str) -> Option<&str> {
        self.map.get(k).map(|s| s.as_str())
    }

    fn num<T: std::str::FromStr>(&self, k: &str, default: T) -> Result<T, ConfigError> {
        match self.get(k) {
            None => Ok(default),
            Some(v) => v.parse().or_else(|_| bad(k, format!("cannot parse '{v}'"))),
        }
    }

    fn list<T: std::str::FromStr>(&self, k: &str, default: Vec<T>) -> Result<Vec<T>, ConfigError> {
        match self.get(k) {
            None => Ok(default),
            Some(v) => v
                .split(',')
                .map(|t| t.trim().parse().or_else(|_| bad(k, format!("cannot parse entry '{t}'"))))
                .collect(),
        }
    }
}

fn default_kernel(cmd: Command) -> &'static str {
    match cmd {
        Command::Decompose | Command::BumpChain => "beurling:1",
        _ => "smooth-dini",
    }
}

fn default_n(cmd: Command, d: usize) -> usize {
    match (cmd, d) {
        (Command::Weights, 1) | (Command::Sparse, 1) => 4096,
        (Command::Decompose, _) => 256,
        (Command::Sparse, _) => 128,
        (Command::NormProbe | Command::A2Growth | Command::Cotlar | Command::Weak11, 1) => 1024,
        (_, 1) => 256,
        _ => 64,
    }
}

fn default_deltas(cmd: Command, d: usize) -> Vec<f64> {
    match (cmd, d) {
        (Command::BumpChain, _) => vec![0.5],
        (Command::A2Growth, 1) => vec![-0.8, -0.6, -0.4, 0.0, 0.4, 0.6, 0.8],
        (Command::A2Growth, _) => vec![-1.2, -0.8, -0.4, 0.0, 0.4, 0.8, 1.2],
        (_, 1) => vec![-0.75, -0.5, -0.25, 0.25, 0.5, 0.75],
        _ => vec![-1.2, -0.8, -0.4, 0.4, 0.8, 1.2],
    }
}

fn kernel_from(name: &str) -> Result<KernelSpec, ConfigError> {
    let builtin = ["odd1d", "smooth-dini", "smooth-dini:d2"].contains(&name) || name.starts_with("beurling:");
    let spec = if !builtin && name.starts_with("smooth-dini:") {
        let path = &name["smooth-dini:".len()..];
        let text = std::fs::read_to_string(path).or_else(|e| bad("kernel", format!("cannot read '{path}': {e}")))?;
        SmoothDiniParams::parse(&text).and_then(KernelSpec::smooth_dini)
    } else {
        KernelSpec::from_name(name)
    };
    spec.or_else(|e| bad("kernel", e.to_string()))
}

impl RunConfig {
    /// Resolves `settings` against the defaults of `cmd`.
    pub fn resolve(cmd: Command, settings: &[(String, String)]) -> Result<Self, ConfigError> {
        let mut map = BTreeMap::new();
        if let Some((_, path)) = settings.iter().rev().find(|(k, _)| k == "config") {
            let text = std::fs::read_to_string(path).or_else(|e| bad("config", format!("cannot read '{path}': {e}")))?;
            map = parse_key_values(&text).or_else(|e| bad("config", e.to_string()))?;
        }
        for (k, v) in settings {
            if k != "config" {
                map.insert(k.clone(), v.clone());
            }
        }
        for k in map.keys() {
            if !KEYS.iter().any(|(name, _)| name == k) {
                return bad(k, "unknown key (see `sdlab keys`)");
            }
        }
        let src = Source { map };

        let d_hint: usize = src.num("d", 0)?;
        let kernel_name = match src.get("kernel") {
            Some(k) => k.to_string(),
            None if d_hint == 2 && default_kernel(cmd) == "smooth-dini" => "smooth-dini:d2".to_string(),
            None => default_kernel(cmd).to_string(),
        };
        let kernel = kernel_from(&kernel_name)?;
        let d = src.num("d", kernel.d())?;
        if !(d == 1 || d == 2) {
            return bad("d", "dimension must be 1 or 2");
        }
        if d != kernel.d() && !matches!(cmd, Command::GridCheck | Command::Weights | Command::ScheduleCompare) {
            return bad("d", format!("kernel '{kernel_name}' lives in dimension {}", kernel.d()));
        }
        let n = src.num("n", default_n(cmd, d))?;
        let side = src.num("side", 1.0)?;
        let grid = Grid::new(d, n, side).or_else(|e| bad("n", e.to_string()))?;
        if !n.is_power_of_two() && matches!(cmd, Command::Weights | Command::BumpChain | Command::A2Growth) {
            return bad("n", "dyadic cube families need a power-of-two grid");
        }

        let eps_min = src.num("eps_min", grid.cell_diagonal())?;
        let rho = src.num("rho", 2f64.sqrt())?;
        let r_max = src.num("r_max", 2.0 * side)?;
        RadiiSet::geometric(eps_min, rho, r_max)
            .and_then(|r| r.check_resolution(&grid))
            .or_else(|e| bad("eps_min", e.to_string()))?;

        let schedule_name = src.get("schedule").unwrap_or("dyadic").to_string();
        let schedule = Schedule::parse(&schedule_name).or_else(|e| bad("schedule", e.to_string()))?;
        if let Some(f) = src.get("family") {
            if f != "power" {
                return bad("family", format!("unknown family '{f}', only 'power' is available"));
            }
        }
        let p: f64 = src.num("p", 2.0)?;
        if !(p > 1.0 && p.is_finite()) {
            return bad("p", "p must lie in (1, ∞)");
        }
        let deltas = src.list("deltas", default_deltas(cmd, d))?;
        if deltas.is_empty() {
            return bad("deltas", "at least one exponent is needed");
        }
        let hi = d as f64 * (p - 1.0);
        if let Some(t) = deltas.iter().find(|&&t| !(t > -(d as f64) && t < hi)) {
            return bad("deltas", format!("|x|^{t} is not an A_{p} weight in dimension {d}: need -{d} < delta < {hi}"));
        }

        let calibration = match src.get("calibration") {
            None => Calibration::frozen(),
            Some(path) => {
                let text =
                    std::fs::read_to_string(path).or_else(|e| bad("calibration", format!("cannot read '{path}': {e}")))?;
                Calibration::parse(&text).or_else(|e| bad("calibration", e.to_string()))?
            }
        };
        let powers = src.list("powers", vec![1u32, 2, 4, 8])?;
        if !powers.contains(&1) || powers.contains(&0) {
            return bad("powers", "powers must be positive and include 1");
        }
        let lambdas = src.list("lambdas", (1..=8).map(|k| 2f64.powi(k)).collect())?;
        if lambdas.len() < 3 || lambdas.iter().any(|&l| !(l >= 1.0)) {
            return bad("lambdas", "need at least three values, each at least 1");
        }
        let alpha = src.num("alpha", calibration.series_alpha())?;
        if !(alpha > 0.0) {
            return bad("alpha", "must be positive");
        }
        let input = src.get("input").map(PathBuf::from);
        let radius = src.num("radius", if d == 1 { 1.0 / 64.0 } else { 1.0 / 32.0 })?;
        if !(radius > 0.0 && radius < 0.5 * side) {
            return bad("radius", "support ball must fit inside the domain");
        }
        let positive = |k: &str, v: f64| if v > 0.0 { Ok(v) } else { bad(k, "must be positive") };
        let count = |k: &str, v: usize| if v > 0 { Ok(v) } else { bad(k, "must be at least 1") };
        let rough = kernel.is_rough();

        let cfg = RunConfig {
            out: PathBuf::from(src.get("out").unwrap_or("sdlab-out")),
            kernel_name,
            kernel,
            grid,
            eps_min,
            rho,
            r_max,
            schedule,
            deltas,
            p,
            seed: src.num("seed", 17)?,
            trials: count("trials", src.num("trials", 10_000)?)?,
            budget: count("budget", src.num("budget", 64)?)?,
            j_max: count("j_max", src.num("j_max", 6)?)?,
            powers,
            lambdas,
            alpha,
            input,
            radius,
            tests: count("tests", src.num("tests", if d == 1 { 20 } else { 5 })?)?,
            max_iter: count("max_iter", src.num("max_iter", 500)?)?,
            iter_tol: positive("iter_tol", src.num("iter_tol", 1e-6)?)?,
            calibration,
            oracle_tol: positive("oracle_tol", src.num("oracle_tol", 0.02)?)?,
            scale_tol: positive("scale_tol", src.num("scale_tol", 1e-8)?)?,
            envelope_min: positive("envelope_min", src.num("envelope_min", 0.2)?)?,
            decay_slope_max: src.num("decay_slope_max", -0.2)?,
            r2_min: src.num("r2_min", 0.9)?,
            size_spread_max: positive("size_spread_max", src.num("size_spread_max", 3.0)?)?,
            eta: positive("eta", src.num("eta", 0.5)?)?,
            adjoint_tol: positive("adjoint_tol", src.num("adjoint_tol", 1e-10)?)?,
            series_tol: positive("series_tol", src.num("series_tol", 0.15)?)?,
            exponent_max: positive("exponent_max", src.num("exponent_max", if rough { 2.2 } else { 1.3 })?)?,
            stability: positive("stability", src.num("stability", 2.0)?)?,
            resolved: BTreeMap::new(),
        };
        if cfg.eta >= 1.0 {
            return bad("eta", "must lie in (0, 1)");
        }
        Ok(cfg.with_resolved(cmd, &schedule_name))
    }

    fn with_resolved(mut self, cmd: Command, schedule_name: &str) -> Self {
        let join = |v: &[String]| v.join(",");
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("subcommand", cmd.name().to_string());
        put("out", self.out.display().to_string());
        put("kernel", self.kernel_name.clone());
        put("d", self.grid.d.to_string());
        put("n", self.grid.n.to_string());
        put("side", format!("{:e}", self.grid.side));
        put("eps_min", format!("{:e}", self.eps_min));
        put("rho", format!("{:e}", self.rho));
        put("r_max", format!("{:e}", self.r_max));
        put("schedule", schedule_name.to_string());
        put("family", "power".into());
        put("deltas", join(&self.deltas.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>()));
        put("p", format!("{:e}", self.p));
        put("seed", self.seed.to_string());
        put("trials", self.trials.to_string());
        put("budget", self.budget.to_string());
        put("j_max", self.j_max.to_string());
        put("powers", join(&self.powers.iter().map(|v| v.to_string()).collect::<Vec<_>>()));
        put("lambdas", join(&self.lambdas.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>()));
        put("alpha", format!("{:e}", self.alpha));
        put("input", self.input.as_ref().map(|p| p.display().to_string()).unwrap_or_default());
        put("radius", format!("{:e}", self.radius));
        put("tests", self.tests.to_string());
        put("max_iter", self.max_iter.to_string());
        put("iter_tol", format!("{:e}", self.iter_tol));
        put("calibration", self.calibration.to_text());
        for (k, v) in [
            ("oracle_tol", self.oracle_tol),
            ("scale_tol", self.scale_tol),
            ("envelope_min", self.envelope_min),
            ("decay_slope_max", self.decay_slope_max),
            ("r2_min", self.r2_min),
            ("size_spread_max", self.size_spread_max),
            ("eta", self.eta),
            ("adjoint_tol", self.adjoint_tol),
            ("series_tol", self.series_tol),
            ("exponent_max", self.exponent_max),
            ("stability", self.stability),
        ] {
            put(k, format!("{v:e}"));
        }
        self.resolved = m;
        self
    }

    /// SHA-256 of the subcommand and the resolved settings; the output
    /// directory is left out so that moving a run does not change its identity.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.resolved.iter().filter(|(k, _)| *k != "out") {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }

    /// Power-iteration settings for the norm drivers.
    pub fn power(&self) -> sdlab_core::normlab::PowerConfig {
        sdlab_core::normlab::PowerConfig {
            tol: self.iter_tol,
            max_iter: self.max_iter,
            seed: self.seed,
        }
    }
}
