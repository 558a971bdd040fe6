//! Weighted operator norms and the experiments built on them.
//!
//! `‖T‖_{L²(w)}` is the top singular value of `A = w^{1/2} T w^{-1/2}` acting on
//! unweighted `ℓ²`, so every weighted `p = 2` norm reduces to power iteration on
//! `A*A` (or a dense SVD on small grids). Other exponents are only ever probed
//! from below by maximising the ratio over trial inputs.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::lpdecomp::{apply_multiplier, frequency_grid_for, resolvable_levels, Decomposition, Schedule};
use crate::operators::beurling::{apply_symbol, BeurlingConvention, PaddedBeurling};
use crate::operators::kernel::KernelSpec;
use crate::operators::truncation::TruncatedOperator;
use crate::stats::{power_fit, LinearFit};
use crate::weights::{characteristics, conjugate, CubeFamily, Weight};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Grids up to this many cells get the dense SVD where a certified value is needed.
pub const DENSE_MAX: usize = 2048;

pub type LinearMap = Arc<dyn Fn(&[Complex64]) -> Vec<Complex64> + Send + Sync>;

/// A linear map on grid samples together with its unweighted adjoint.
#[derive(Clone)]
pub struct OperatorHandle {
    pub grid: Grid,
    pub descriptor: String,
    apply: LinearMap,
    adjoint: LinearMap,
}

impl fmt::Debug for OperatorHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorHandle")
            .field("grid", &self.grid)
            .field("descriptor", &self.descriptor)
            .finish()
    }
}

impl OperatorHandle {
    pub fn new(grid: Grid, descriptor: impl Into<String>, apply: LinearMap, adjoint: LinearMap) -> Self {
        OperatorHandle {
            grid,
            descriptor: descriptor.into(),
            apply,
            adjoint,
        }
    }

    pub fn identity(grid: Grid) -> Self {
        let id: LinearMap = Arc::new(|v: &[Complex64]| v.to_vec());
        Self::new(grid, "identity", id.clone(), id)
    }

    /// Pointwise multiplication by `g`.
    pub fn multiplication(g: &GridFunction) -> Self {
        let a = Arc::new(g.values.clone());
        let b = a.clone();
        Self::new(
            g.grid,
            "multiplication",
            Arc::new(move |v: &[Complex64]| v.iter().zip(a.iter()).map(|(x, m)| x * m).collect()),
            Arc::new(move |v: &[Complex64]| v.iter().zip(b.iter()).map(|(x, m)| x * m.conj()).collect()),
        )
    }

    /// `T_{ε,∞}` with the kernel sampled as in the truncation module.
    pub fn truncated(kernel: &KernelSpec, grid: Grid, eps: f64) -> Result<Self> {
        let op = Arc::new(TruncatedOperator::new(kernel, grid, eps)?);
        let adj = op.clone();
        Ok(Self::new(
            grid,
            format!("{}:eps={eps}", kernel.name()),
            Arc::new(move |v: &[Complex64]| op.apply(v)),
            Arc::new(move |v: &[Complex64]| adj.apply_adjoint(v)),
        ))
    }

    /// `B^m` on compactly supported data (zero padding to `2n`).
    pub fn beurling(grid: Grid, m: u32, convention: BeurlingConvention) -> Result<Self> {
        let op = Arc::new(PaddedBeurling::new(grid, m, convention)?);
        let adj = op.clone();
        Ok(Self::new(
            grid,
            format!("beurling:{m}:{}", convention.as_str()),
            Arc::new(move |v: &[Complex64]| op.apply(v)),
            Arc::new(move |v: &[Complex64]| adj.apply_adjoint(v)),
        ))
    }

    /// `B^m` on one period: a unitary map.
    pub fn beurling_periodic(grid: Grid, m: u32, convention: BeurlingConvention) -> Result<Self> {
        if grid.d != 2 {
            return invalid("the Beurling multiplier acts on 2D grids");
        }
        let n = grid.n;
        let m = m as i32;
        Ok(Self::new(
            grid,
            format!("beurling-periodic:{m}:{}", convention.as_str()),
            Arc::new(move |v: &[Complex64]| apply_symbol(v, n, m, convention)),
            Arc::new(move |v: &[Complex64]| apply_symbol(v, n, -m, convention)),
        ))
    }

    /// Fourier multiplier on `freq_grid` (the data grid or its zero-padded double).
    pub fn multiplier(grid: Grid, freq_grid: Grid, multiplier: Vec<Complex64>, descriptor: &str) -> Result<Self> {
        // validates the grid pairing once
        apply_multiplier(&freq_grid, &multiplier, &GridFunction::zeros(grid))?;
        let m = Arc::new(multiplier);
        let mc = Arc::new(m.iter().map(|v| v.conj()).collect::<Vec<_>>());
        let run = move |mult: Arc<Vec<Complex64>>| -> LinearMap {
            Arc::new(move |v: &[Complex64]| {
                let f = GridFunction::from_values(grid, v.to_vec()).expect("length checked by caller");
                apply_multiplier(&freq_grid, &mult, &f).expect("grids validated").values
            })
        };
        Ok(Self::new(grid, descriptor, run(m), run(mc)))
    }

    /// The Littlewood–Paley piece `T_j^N` acting on compactly supported data.
    pub fn piece(kernel: &KernelSpec, schedule: &Schedule, j: usize, grid: Grid) -> Result<Self> {
        let fg = frequency_grid_for(&GridFunction::zeros(grid))?;
        let dec = Decomposition::with_levels(kernel, fg, resolvable_levels(&grid)?)?;
        Self::piece_of(&dec, schedule, j, grid)
    }

    pub fn piece_of(dec: &Decomposition, schedule: &Schedule, j: usize, grid: Grid) -> Result<Self> {
        let m = dec.piece_multiplier(schedule, j)?;
        Self::multiplier(grid, dec.grid, m, &format!("piece:{}:{j}", schedule.name()))
    }

    fn check(&self, v: &[Complex64]) -> Result<()> {
        if v.len() != self.grid.len() {
            return invalid(format!("operator expects {} samples, got {}", self.grid.len(), v.len()));
        }
        Ok(())
    }

    pub fn apply_values(&self, v: &[Complex64]) -> Vec<Complex64> {
        (self.apply)(v)
    }

    pub fn adjoint_values(&self, v: &[Complex64]) -> Vec<Complex64> {
        (self.adjoint)(v)
    }

    pub fn apply(&self, f: &GridFunction) -> Result<GridFunction> {
        if f.grid != self.grid {
            return invalid("function and operator live on different grids");
        }
        self.check(&f.values)?;
        GridFunction::from_values(self.grid, self.apply_values(&f.values))
    }

    pub fn apply_adjoint(&self, f: &GridFunction) -> Result<GridFunction> {
        if f.grid != self.grid {
            return invalid("function and operator live on different grids");
        }
        GridFunction::from_values(self.grid, self.adjoint_values(&f.values))
    }

    /// Largest `|⟨Tf, g⟩ - ⟨f, T*g⟩| / (‖Tf‖‖g‖ + ‖f‖‖T*g‖)` over random pairs.
    pub fn adjoint_error(&self, trials: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..trials {
            let f = random_vector(self.grid.len(), &mut rng);
            let g = random_vector(self.grid.len(), &mut rng);
            let tf = self.apply_values(&f);
            let tg = self.adjoint_values(&g);
            let a = dot(&tf, &g);
            let b = dot(&f, &tg);
            let scale = norm2(&tf) * norm2(&g) + norm2(&f) * norm2(&tg);
            if scale > 0.0 {
                worst = worst.max((a - b).norm() / scale);
            }
        }
        worst
    }
}

fn random_vector(n: usize, rng: &mut impl Rng) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect()
}

/// `Σ a conj(b)`
fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

fn norm2(a: &[Complex64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// `w^{1/2} T w^{-1/2}` and its adjoint, as closures on raw samples.
struct Conjugated<'a> {
    op: &'a OperatorHandle,
    root: Vec<f64>,
    inv_root: Vec<f64>,
}

impl<'a> Conjugated<'a> {
    fn new(op: &'a OperatorHandle, w: &Weight) -> Result<Self> {
        if w.grid != op.grid {
            return invalid("weight and operator live on different grids");
        }
        let root: Vec<f64> = w.values().iter().map(|v| v.sqrt()).collect();
        let inv_root = root.iter().map(|v| 1.0 / v).collect();
        Ok(Conjugated { op, root, inv_root })
    }

    fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        let x: Vec<Complex64> = v.iter().zip(&self.inv_root).map(|(a, s)| a * s).collect();
        let mut y = self.op.apply_values(&x);
        for (a, s) in y.iter_mut().zip(&self.root) {
            *a *= s;
        }
        y
    }

    fn adjoint(&self, v: &[Complex64]) -> Vec<Complex64> {
        let x: Vec<Complex64> = v.iter().zip(&self.root).map(|(a, s)| a * s).collect();
        let mut y = self.op.adjoint_values(&x);
        for (a, s) in y.iter_mut().zip(&self.inv_root) {
            *a *= s;
        }
        y
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMethod {
    PowerIteration,
    /// Full SVD of the conjugated matrix; exact up to rounding.
    Dense,
    /// Maximised ratio over trial inputs; a lower bound only.
    InputMaximization,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormEstimate {
    pub value: f64,
    pub method: NormMethod,
    pub iterations: usize,
    /// `‖A*A v - λ v‖ / λ` at the final iterate.
    pub residual: f64,
    /// Rayleigh quotients `‖A v_k‖²` per iteration.
    pub history: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PowerConfig {
    /// Relative change of the norm below which iteration stops.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        PowerConfig {
            tol: 1e-6,
            max_iter: 500,
            seed: 17,
        }
    }
}

/// `‖T‖_{L²(w) → L²(w)}` by power iteration with the default configuration.
pub fn weighted_l2_norm(op: &OperatorHandle, w: &Weight) -> Result<NormEstimate> {
    weighted_l2_norm_with(op, w, &PowerConfig::default())
}

pub fn weighted_l2_norm_with(op: &OperatorHandle, w: &Weight, cfg: &PowerConfig) -> Result<NormEstimate> {
    if !(cfg.tol > 0.0) || cfg.max_iter == 0 {
        return invalid("power iteration needs tol > 0 and at least one iteration");
    }
    let a = Conjugated::new(op, w)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut v = random_vector(op.grid.len(), &mut rng);
    normalize(&mut v);
    let mut history = Vec::new();
    let mut prev = f64::NAN;
    let mut residual = f64::INFINITY;
    for it in 1..=cfg.max_iter {
        let u = a.apply(&v);
        let lambda = u.iter().map(|x| x.norm_sqr()).sum::<f64>();
        history.push(lambda);
        if lambda == 0.0 {
            return Ok(NormEstimate {
                value: 0.0,
                method: NormMethod::PowerIteration,
                iterations: it,
                residual: 0.0,
                history,
            });
        }
        let mut z = a.adjoint(&u);
        residual = z
            .iter()
            .zip(&v)
            .map(|(zi, vi)| (zi - vi * lambda).norm_sqr())
            .sum::<f64>()
            .sqrt()
            / lambda;
        let value = lambda.sqrt();
        if it > 1 && (value - prev).abs() <= cfg.tol * value {
            return Ok(NormEstimate {
                value,
                method: NormMethod::PowerIteration,
                iterations: it,
                residual,
                history,
            });
        }
        prev = value;
        normalize(&mut z);
        v = z;
    }
    let lambda = *history.last().expect("at least one iteration");
    Err(Error::NonConvergence {
        iterations: cfg.max_iter,
        lower: lambda.sqrt(),
        upper: (lambda * (1.0 + residual)).sqrt(),
    })
}

fn normalize(v: &mut [Complex64]) {
    let n = norm2(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

/// Top singular value of the assembled `w^{1/2} T w^{-1/2}` matrix.
pub fn weighted_l2_norm_dense(op: &OperatorHandle, w: &Weight) -> Result<NormEstimate> {
    let n = op.grid.len();
    if n > DENSE_MAX {
        return invalid(format!("dense norm limited to {DENSE_MAX} cells, grid has {n}"));
    }
    let a = Conjugated::new(op, w)?;
    let columns: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut e = vec![ZERO; n];
            e[k] = Complex64::new(1.0, 0.0);
            a.apply(&e)
        })
        .collect();
    let m = DMatrix::from_fn(n, n, |i, k| columns[k][i]);
    let value = m.singular_values().iter().cloned().fold(0.0, f64::max);
    Ok(NormEstimate {
        value,
        method: NormMethod::Dense,
        iterations: n,
        residual: 0.0,
        history: Vec::new(),
    })
}

/// Power iteration, falling back to the dense SVD when it stalls on a small grid.
pub fn certified_l2_norm(op: &OperatorHandle, w: &Weight, cfg: &PowerConfig) -> Result<NormEstimate> {
    match weighted_l2_norm_with(op, w, cfg) {
        Err(Error::NonConvergence { .. }) if op.grid.len() <= DENSE_MAX => weighted_l2_norm_dense(op, w),
        other => other,
    }
}

/// Dense SVD when the grid is small enough, power iteration otherwise.
pub fn weighted_l2_norm_auto(op: &OperatorHandle, w: &Weight, cfg: &PowerConfig) -> Result<NormEstimate> {
    if op.grid.len() <= DENSE_MAX {
        weighted_l2_norm_dense(op, w)
    } else {
        weighted_l2_norm_with(op, w, cfg)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LowerBound {
    pub value: f64,
    pub p: f64,
    pub budget: usize,
    pub seed: u64,
    /// Index of the trial input that attained the maximum.
    pub argmax: usize,
    pub method: NormMethod,
}

/// `(Σ |v|^p w)^{1/p}`; the cell volume cancels in every ratio.
fn weighted_lp(v: &[Complex64], w: &[f64], p: f64) -> f64 {
    v.iter().zip(w).map(|(x, s)| x.norm().powf(p) * s).sum::<f64>().powf(1.0 / p)
}

/// Trial input number `i`: even indices are random fields, odd ones indicators
/// of random boxes. Each is drawn from its own stream so a larger budget only
/// adds inputs.
fn trial_input(grid: &Grid, seed: u64, i: usize) -> Vec<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    if i % 2 == 0 {
        return random_vector(grid.len(), &mut rng);
    }
    let n = grid.n;
    let mut lo = [0usize; 2];
    let mut hi = [1usize; 2];
    for a in 0..grid.d {
        let len = rng.gen_range(1..=n);
        lo[a] = rng.gen_range(0..=n - len);
        hi[a] = lo[a] + len;
    }
    (0..grid.len())
        .map(|k| {
            let idx = grid.unflatten(k);
            let inside = (0..grid.d).all(|a| idx[a] >= lo[a] && idx[a] < hi[a]);
            if inside {
                Complex64::new(1.0, 0.0)
            } else {
                ZERO
            }
        })
        .collect()
}

/// Ascent steps per trial input in [`weighted_lp_lower_bound`].
pub const ASCENT_STEPS: usize = 6;

/// Lower bound for `‖T‖_{L^p(w)}`: the best ratio over `budget` trial inputs,
/// each refined by a few steps of the nonlinear power method.
pub fn weighted_lp_lower_bound(op: &OperatorHandle, w: &Weight, p: f64, budget: usize, seed: u64) -> Result<LowerBound> {
    if !(p > 1.0 && p.is_finite()) {
        return invalid("p must lie in (1, ∞)");
    }
    if w.grid != op.grid {
        return invalid("weight and operator live on different grids");
    }
    let wv = w.values();
    let pp = conjugate(p);
    let ratio = |f: &[Complex64]| -> (f64, Vec<Complex64>) {
        let tf = op.apply_values(f);
        let den = weighted_lp(f, wv, p);
        let r = if den > 0.0 { weighted_lp(&tf, wv, p) / den } else { 0.0 };
        (r, tf)
    };
    let per_trial: Vec<f64> = (0..budget)
        .into_par_iter()
        .map(|i| {
            let mut f = trial_input(&op.grid, seed, i);
            let mut best = 0.0f64;
            for step in 0..=ASCENT_STEPS {
                let (r, tf) = ratio(&f);
                best = best.max(r);
                if step == ASCENT_STEPS || r == 0.0 {
                    break;
                }
                // gradient of ‖Tf‖^p is T*(w |Tf|^{p-2} Tf); map it back through the duality map
                let g: Vec<Complex64> = tf
                    .iter()
                    .zip(wv)
                    .map(|(x, s)| {
                        let a = x.norm();
                        if a == 0.0 {
                            ZERO
                        } else {
                            x * (s * a.powf(p - 2.0))
                        }
                    })
                    .collect();
                let u = op.adjoint_values(&g);
                f = u
                    .iter()
                    .zip(wv)
                    .map(|(x, s)| {
                        let a = x.norm();
                        if a == 0.0 {
                            ZERO
                        } else {
                            x * ((a / s).powf(pp - 1.0) / a)
                        }
                    })
                    .collect();
            }
            best
        })
        .collect();
    let (argmax, value) = per_trial
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |acc, (i, &r)| if r > acc.1 { (i, r) } else { acc });
    Ok(LowerBound {
        value,
        p,
        budget,
        seed,
        argmax,
        method: NormMethod::InputMaximization,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SteinWeissReport {
    pub p: f64,
    pub lambda: f64,
    /// Norm on `L^p(w0^λ w1^{1-λ})`.
    pub m: f64,
    pub m0: f64,
    pub m1: f64,
    /// `M0^λ M1^{1-λ}`
    pub rhs: f64,
    pub tolerance: f64,
    pub method: NormMethod,
    pub pass: bool,
}

/// Checks `M ≤ M0^λ M1^{1-λ}` for `p0 = p1 = p = 2` with certified norms.
pub fn stein_weiss_check(
    op: &OperatorHandle,
    w0: &Weight,
    w1: &Weight,
    p: f64,
    lambda: f64,
    tolerance: f64,
) -> Result<SteinWeissReport> {
    if !(0.0..=1.0).contains(&lambda) {
        return invalid("lambda must lie in [0, 1]");
    }
    if p != 2.0 {
        return invalid("only p = 2 has certified norms");
    }
    if w0.grid != w1.grid {
        return invalid("w0 and w1 live on different grids");
    }
    let w = Weight::new(
        w0.grid,
        w0.values()
            .iter()
            .zip(w1.values())
            .map(|(a, b)| a.powf(lambda) * b.powf(1.0 - lambda))
            .collect(),
    )?;
    let cfg = PowerConfig {
        tol: tolerance.min(1e-6),
        max_iter: 5000,
        ..PowerConfig::default()
    };
    let m = weighted_l2_norm_auto(op, &w, &cfg)?;
    let m0 = weighted_l2_norm_auto(op, w0, &cfg)?;
    let m1 = weighted_l2_norm_auto(op, w1, &cfg)?;
    let rhs = m0.value.powf(lambda) * m1.value.powf(1.0 - lambda);
    Ok(SteinWeissReport {
        p,
        lambda,
        m: m.value,
        m0: m0.value,
        m1: m1.value,
        rhs,
        tolerance,
        method: m.method,
        pass: m.value <= rhs * (1.0 + tolerance),
    })
}

/// `Σ_{j≥0} (1 + N(j)) 2^{-α N(j-1)/Λ}` with `N(-1) = 0`, summed until the
/// terms are decreasing and below `1e-12`.
pub fn schedule_series(lambda: f64, schedule: &Schedule, alpha: f64) -> Result<f64> {
    if !(lambda >= 1.0 && lambda.is_finite()) {
        return invalid("Lambda must be at least 1");
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return invalid("alpha must be positive");
    }
    schedule.validate()?;
    let mut sum = 0.0;
    let mut prev_term = f64::INFINITY;
    let mut prev_n = 0u32;
    for j in 0.. {
        let n = match schedule.n(j) {
            Ok(n) => n,
            Err(_) => return invalid(format!("schedule ended at j = {j} before the series converged")),
        };
        let term = (1.0 + n as f64) * (-alpha * prev_n as f64 / lambda).exp2();
        sum += term;
        if term < 1e-12 && term < prev_term {
            break;
        }
        prev_term = term;
        prev_n = n;
    }
    Ok(sum)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExponentFit {
    pub exponent: f64,
    /// Half-width of the 95% confidence interval of the exponent.
    pub ci: f64,
    pub r2: f64,
    pub intercept: f64,
}

/// Log-log fit of `y` against `x` with a Student-t band on the slope.
pub fn exponent_fit(x: &[f64], y: &[f64]) -> Result<ExponentFit> {
    let fit: LinearFit = power_fit(x, y)?;
    let n = x.len();
    let ci = if n > 2 {
        let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        let mx = lx.iter().sum::<f64>() / n as f64;
        let sxx: f64 = lx.iter().map(|v| (v - mx).powi(2)).sum();
        let ss: f64 = lx
            .iter()
            .zip(y)
            .map(|(a, b)| (b.ln() - fit.eval(*a)).powi(2))
            .sum();
        let se = (ss / (n - 2) as f64 / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, (n - 2) as f64)
            .map_err(|e| Error::Internal(e.to_string()))?
            .inverse_cdf(0.975);
        t * se
    } else {
        f64::INFINITY
    };
    Ok(ExponentFit {
        exponent: fit.slope,
        ci,
        r2: fit.r2,
        intercept: fit.intercept,
    })
}

/// Fitted exponent of `schedule_series` against `Λ`.
pub fn schedule_exponent(schedule: &Schedule, alpha: f64, lambdas: &[f64]) -> Result<ExponentFit> {
    let values = lambdas
        .iter()
        .map(|&l| schedule_series(l, schedule, alpha))
        .collect::<Result<Vec<_>>>()?;
    exponent_fit(lambdas, &values)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BumpRow {
    pub j: usize,
    pub n_j: u32,
    /// `sup |m_j|`, an upper bound for the unweighted norm.
    pub unweighted: f64,
    /// Power-iteration norm on `L²(w^{1+ε})`.
    pub bumped_measured: f64,
    /// `c (1 + N(j)) {w^{1+ε}}`
    pub bumped_bound: f64,
    /// `unweighted^λ bumped_bound^{1-λ}`
    pub interpolated: f64,
    /// `unweighted^λ bumped_measured^{1-λ}`
    pub interpolated_measured: f64,
    /// Power-iteration norm on `L²(w)`.
    pub measured: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BumpChainReport {
    pub eps: f64,
    pub lambda: f64,
    pub braces: f64,
    pub parens: f64,
    pub bumped_braces: f64,
    pub rows: Vec<BumpRow>,
    /// `Σ_j interpolated`
    pub total: f64,
    /// `total / ({w} (w))`
    pub total_ratio: f64,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BumpConfig {
    /// Dimensional constant in `ε = c_d / (2 (w))`.
    pub c_d: f64,
    /// Constant of the piecewise bound `‖T_j^N‖_{L²(v)} ≤ c (1 + N(j)) {v}`.
    pub piece_const: f64,
    /// Overrides the default `ε`; must not exceed `c_d / (w)`.
    pub eps: Option<f64>,
    pub j_max: usize,
    pub power: PowerConfig,
}

/// Interpolates each piece between the unweighted and the bumped weight.
pub fn epsilon_bump_chain(
    kernel: &KernelSpec,
    w: &Weight,
    schedule: &Schedule,
    fam: &CubeFamily,
    cfg: &BumpConfig,
) -> Result<BumpChainReport> {
    if !(cfg.c_d > 0.0 && cfg.piece_const > 0.0) {
        return invalid("bump constants must be positive");
    }
    let grid = w.grid;
    let ch = characteristics(w, 2.0, fam)?;
    let eps_max = cfg.c_d / ch.parens;
    let eps = cfg.eps.unwrap_or(0.5 * eps_max);
    if !(eps > 0.0 && eps <= eps_max) {
        return invalid(format!("bump exponent {eps} outside the admissible range (0, {eps_max}]"));
    }
    let bumped = w.pow(1.0 + eps)?;
    let bch = characteristics(&bumped, 2.0, fam)?;
    if !bch.braces.is_finite() {
        return invalid("bumped weight has infinite characteristic");
    }
    let lambda = eps / (1.0 + eps);
    let fg = frequency_grid_for(&GridFunction::zeros(grid))?;
    let dec = Decomposition::with_levels(kernel, fg, resolvable_levels(&grid)?)?;
    let rows = (0..=cfg.j_max)
        .map(|j| {
            let n_j = schedule.n(j)?;
            let op = OperatorHandle::piece_of(&dec, schedule, j, grid)?;
            let unweighted = dec.piece_l2_norm(schedule, j)?;
            let bumped_measured = certified_l2_norm(&op, &bumped, &cfg.power)?.value;
            let measured = certified_l2_norm(&op, w, &cfg.power)?.value;
            let bumped_bound = cfg.piece_const * (1.0 + n_j as f64) * bch.braces;
            let interpolated = unweighted.powf(lambda) * bumped_bound.powf(1.0 - lambda);
            let interpolated_measured = unweighted.powf(lambda) * bumped_measured.powf(1.0 - lambda);
            Ok(BumpRow {
                j,
                n_j,
                unweighted,
                bumped_measured,
                bumped_bound,
                interpolated,
                interpolated_measured,
                measured,
                ok: measured <= interpolated * (1.0 + cfg.power.tol),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = rows.iter().map(|r| r.interpolated).sum();
    Ok(BumpChainReport {
        eps,
        lambda,
        braces: ch.braces,
        parens: ch.parens,
        bumped_braces: bch.braces,
        pass: rows.iter().all(|r| r.ok),
        total_ratio: total / (ch.braces * ch.parens),
        total,
        rows,
    })
}

/// Predicted `‖T‖_{L²(w)}` as a function of the characteristics.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BoundModel {
    /// `c [w]`
    Linear { c: f64 },
    /// `c [w]²`
    Quadratic { c: f64 },
    /// `c m [w] min(1 + log m, [w])`
    BeurlingPower { c: f64, m: u32 },
}

impl BoundModel {
    pub fn eval(&self, ap: f64) -> f64 {
        match *self {
            BoundModel::Linear { c } => c * ap,
            BoundModel::Quadratic { c } => c * ap * ap,
            BoundModel::BeurlingPower { c, m } => c * m as f64 * ap * (1.0 + (m as f64).ln()).min(ap),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrowthRow {
    pub param: f64,
    pub ap: f64,
    pub braces: f64,
    pub parens: f64,
    pub norm: f64,
    pub bound: f64,
    pub ratio: f64,
    pub violation: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub operator: String,
    pub rows: Vec<GrowthRow>,
    pub fit: ExponentFit,
    pub violations: usize,
}

/// Measured `‖T‖_{L²(w)}` against `[w]_{A_2}` over a weight family.
///
/// `family` pairs each weight with its parameter; rows come back sorted by it.
pub fn a2_growth_experiment(
    op: &OperatorHandle,
    family: &[(f64, Weight)],
    fam: &CubeFamily,
    bound: BoundModel,
    power: &PowerConfig,
) -> Result<ExperimentReport> {
    if family.len() < 6 {
        return invalid("a growth experiment needs at least 6 weights");
    }
    let mut rows = family
        .par_iter()
        .map(|(param, w)| {
            let ch = characteristics(w, 2.0, fam)?;
            let norm = certified_l2_norm(op, w, power)?.value;
            let b = bound.eval(ch.ap);
            Ok(GrowthRow {
                param: *param,
                ap: ch.ap,
                braces: ch.braces,
                parens: ch.parens,
                norm,
                bound: b,
                ratio: norm / b,
                violation: norm > b,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.param.total_cmp(&b.param));
    let aps: Vec<f64> = rows.iter().map(|r| r.ap).collect();
    let (lo, hi) = aps.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    if hi <= lo * (1.0 + 1e-9) {
        return invalid("degenerate weight family: all A_2 characteristics coincide");
    }
    let norms: Vec<f64> = rows.iter().map(|r| r.norm).collect();
    let fit = exponent_fit(&aps, &norms)?;
    Ok(ExperimentReport {
        operator: op.descriptor.clone(),
        violations: rows.iter().filter(|r| r.violation).count(),
        rows,
        fit,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PowerRow {
    pub m: u32,
    pub param: f64,
    pub ap: f64,
    pub norm: f64,
    /// `‖B^m‖ / (m [w])`
    pub ratio_linear: f64,
    /// `‖B^m‖ / (m [w] (1 + log m))`
    pub ratio_log: f64,
    /// `‖B^m‖ / (m [w] min(1 + log m, [w]))`
    pub ratio_min: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BeurlingPowerReport {
    pub rows: Vec<PowerRow>,
    /// `max ratio_min` over the `m = 1` rows.
    pub c: f64,
    /// Rows with `m > 1` whose `ratio_min` exceeds `c`.
    pub violations: usize,
    pub pass: bool,
}

/// `‖B^m‖_{L²(w)}` over powers and weights. The constant is fitted on `m = 1`
/// alone and then tested on every other power.
pub fn beurling_power_growth(
    grid: Grid,
    powers: &[u32],
    family: &[(f64, Weight)],
    fam: &CubeFamily,
    convention: BeurlingConvention,
    power: &PowerConfig,
) -> Result<BeurlingPowerReport> {
    if !powers.contains(&1) {
        return invalid("the power list must include m = 1 to fit the constant");
    }
    let aps = family
        .iter()
        .map(|(_, w)| Ok(characteristics(w, 2.0, fam)?.ap))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(u32, usize)> = powers
        .iter()
        .flat_map(|&m| (0..family.len()).map(move |i| (m, i)))
        .collect();
    let mut rows = jobs
        .par_iter()
        .map(|&(m, i)| {
            let op = OperatorHandle::beurling(grid, m, convention)?;
            let norm = certified_l2_norm(&op, &family[i].1, power)?.value;
            let ap = aps[i];
            let mm = m as f64;
            let log = 1.0 + mm.ln();
            Ok(PowerRow {
                m,
                param: family[i].0,
                ap,
                norm,
                ratio_linear: norm / (mm * ap),
                ratio_log: norm / (mm * ap * log),
                ratio_min: norm / (mm * ap * log.min(ap)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.m.cmp(&b.m).then(a.param.total_cmp(&b.param)));
    let c = rows
        .iter()
        .filter(|r| r.m == 1)
        .map(|r| r.ratio_min)
        .fold(0.0, f64::max);
    let violations = rows.iter().filter(|r| r.m > 1 && r.ratio_min > c).count();
    Ok(BeurlingPowerReport {
        rows,
        c,
        violations,
        pass: violations == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::power_weight;

    fn grid1(n: usize) -> Grid {
        Grid::new(1, n, 1.0).unwrap()
    }

    fn bump(grid: Grid) -> Weight {
        let v = (0..grid.len())
            .map(|k| {
                let x = grid.point(k);
                1.0 + 3.0 * (-40.0 * x.iter().map(|t| t * t).sum::<f64>()).exp()
            })
            .collect();
        Weight::new(grid, v).unwrap()
    }

    #[test]
    fn identity_has_norm_one() {
        let g = grid1(64);
        let w = power_weight(0.5, g).unwrap();
        let est = weighted_l2_norm(&OperatorHandle::identity(g), &w).unwrap();
        assert!((est.value - 1.0).abs() < 1e-12);
        let lb = weighted_lp_lower_bound(&OperatorHandle::identity(g), &w, 3.0, 4, 1).unwrap();
        assert!((lb.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn multiplication_norm_is_sup() {
        let g = Grid::new(2, 16, 1.0).unwrap();
        let f = GridFunction::from_fn(g, |x| Complex64::new(x[0].cos() + 2.0 * x[1], x[0] * x[1]));
        let sup = f.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let op = OperatorHandle::multiplication(&f);
        let w = bump(g);
        let dense = weighted_l2_norm_dense(&op, &w).unwrap();
        assert!((dense.value - sup).abs() < 1e-10 * sup);
        let cfg = PowerConfig {
            tol: 1e-10,
            max_iter: 20000,
            seed: 3,
        };
        let est = weighted_l2_norm_with(&op, &w, &cfg).unwrap();
        assert!((est.value - sup).abs() < 1e-3 * sup, "{} vs {sup}", est.value);
    }

    #[test]
    fn periodic_beurling_is_unitary() {
        let g = Grid::new(2, 32, 1.0).unwrap();
        let op = OperatorHandle::beurling_periodic(g, 2, BeurlingConvention::ConjOverXi).unwrap();
        let w = Weight::new(g, vec![1.0; g.len()]).unwrap();
        let est = weighted_l2_norm(&op, &w).unwrap();
        assert!((est.value - 1.0).abs() < 1e-9);
        assert!(op.adjoint_error(4, 1) < 1e-12);
    }

    #[test]
    fn adjoints_are_consistent() {
        let g1 = grid1(128);
        let g2 = Grid::new(2, 16, 1.0).unwrap();
        let ops = vec![
            OperatorHandle::truncated(&KernelSpec::from_name("smooth-dini").unwrap(), g1, 0.01).unwrap(),
            OperatorHandle::truncated(&KernelSpec::odd1d(), g1, 0.01).unwrap(),
            OperatorHandle::beurling(g2, 3, BeurlingConvention::ConjOverXi).unwrap(),
            OperatorHandle::piece(&KernelSpec::beurling(1).unwrap(), &Schedule::Dyadic, 1, Grid::new(2, 64, 1.0).unwrap())
                .unwrap(),
        ];
        for op in &ops {
            let e = op.adjoint_error(5, 9);
            assert!(e < 1e-8, "{}: {e}", op.descriptor);
        }
    }

    #[test]
    fn rayleigh_quotients_increase_and_scale_cancels() {
        let g = grid1(256);
        let op = OperatorHandle::truncated(&KernelSpec::from_name("smooth-dini").unwrap(), g, g.cell_diagonal()).unwrap();
        let w = power_weight(0.6, g).unwrap();
        let cfg = PowerConfig {
            max_iter: 3000,
            ..PowerConfig::default()
        };
        let a = weighted_l2_norm_with(&op, &w, &cfg).unwrap();
        for pair in a.history.windows(2) {
            assert!(pair[1] >= pair[0] * (1.0 - 1e-12));
        }
        let b = weighted_l2_norm_with(&op, &w.scaled(37.5).unwrap(), &cfg).unwrap();
        assert!((a.value - b.value).abs() <= 1e-10 * a.value);
        // certified value from below, close to the dense one
        let d = weighted_l2_norm_dense(&op, &w).unwrap();
        assert!(a.value <= d.value * (1.0 + 1e-9) && a.value > 0.98 * d.value);
    }

    #[test]
    fn lp_bound_is_monotone_in_budget_and_below_l2_norm() {
        let g = grid1(128);
        let op = OperatorHandle::truncated(&KernelSpec::odd1d(), g, g.cell_diagonal()).unwrap();
        let w = power_weight(-0.4, g).unwrap();
        let small = weighted_lp_lower_bound(&op, &w, 2.0, 4, 5).unwrap();
        let large = weighted_lp_lower_bound(&op, &w, 2.0, 8, 5).unwrap();
        assert!(large.value >= small.value);
        let exact = weighted_l2_norm_dense(&op, &w).unwrap();
        assert!(large.value <= exact.value * (1.0 + 1e-9));
        assert!(large.value > 0.5 * exact.value);
        let p3 = weighted_lp_lower_bound(&op, &w, 3.0, 4, 5).unwrap();
        assert!(p3.value.is_finite() && p3.value > 0.0);
        assert!(weighted_lp_lower_bound(&op, &w, 1.0, 4, 5).is_err());
    }

    #[test]
    fn stein_weiss_endpoints_and_interior() {
        let g = grid1(128);
        let op = OperatorHandle::truncated(&KernelSpec::odd1d(), g, g.cell_diagonal()).unwrap();
        let w0 = Weight::new(g, vec![1.0; g.len()]).unwrap();
        let w1 = power_weight(0.7, g).unwrap();
        let r0 = stein_weiss_check(&op, &w0, &w1, 2.0, 0.0, 1e-6).unwrap();
        assert_eq!(r0.m, r0.m1);
        let r1 = stein_weiss_check(&op, &w0, &w1, 2.0, 1.0, 1e-6).unwrap();
        assert_eq!(r1.m, r1.m0);
        for lam in [0.2, 0.5, 0.8] {
            let r = stein_weiss_check(&op, &w0, &w1, 2.0, lam, 1e-6).unwrap();
            assert!(r.pass, "{r:?}");
        }
        assert!(stein_weiss_check(&op, &w0, &w1, 3.0, 0.5, 1e-6).is_err());
        assert!(stein_weiss_check(&op, &w0, &w1, 2.0, 1.5, 1e-6).is_err());
    }

    #[test]
    fn series_terms_and_monotonicity() {
        // j = 0 contributes 1, j = 1 contributes 1 + N(1) = 3
        let first_two = 1.0 + 3.0;
        let s = schedule_series(1.0, &Schedule::Dyadic, 1.0).unwrap();
        assert!(s > first_two);
        let mut prev = 0.0;
        for l in [1.0, 2.0, 5.0, 40.0] {
            let v = schedule_series(l, &Schedule::Identity, 1.0).unwrap();
            assert!(v >= prev);
            assert!(schedule_series(l, &Schedule::Identity, 0.5).unwrap() >= v);
            prev = v;
        }
        assert!(schedule_series(0.5, &Schedule::Dyadic, 1.0).is_err());
        assert!(schedule_series(2.0, &Schedule::Dyadic, 0.0).is_err());
        assert!(schedule_series(2.0, &Schedule::Custom(vec![0, 1, 2]), 1.0).is_err());
    }

    #[test]
    fn exponent_fit_band() {
        let x = [1.0, 2.0, 4.0, 8.0, 16.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        let f = exponent_fit(&x, &y).unwrap();
        assert!((f.exponent - 1.5).abs() < 1e-12 && f.ci < 1e-6);
    }

    #[test]
    fn constant_family_is_degenerate() {
        let g = grid1(64);
        let fam = CubeFamily::dyadic(g).unwrap();
        let family: Vec<(f64, Weight)> = (1..=6)
            .map(|c| (c as f64, Weight::new(g, vec![c as f64; g.len()]).unwrap()))
            .collect();
        let op = OperatorHandle::truncated(&KernelSpec::odd1d(), g, g.cell_diagonal()).unwrap();
        let r = a2_growth_experiment(&op, &family, &fam, BoundModel::Linear { c: 1.0 }, &PowerConfig::default());
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn bump_chain_with_trivial_weight() {
        let g = Grid::new(2, 64, 1.0).unwrap();
        let fam = CubeFamily::dyadic(g).unwrap();
        let w = Weight::new(g, vec![1.0; g.len()]).unwrap();
        let cfg = BumpConfig {
            c_d: 0.2,
            piece_const: 1.0,
            eps: None,
            j_max: 2,
            power: PowerConfig::default(),
        };
        let k = KernelSpec::beurling(1).unwrap();
        let r = epsilon_bump_chain(&k, &w, &Schedule::Dyadic, &fam, &cfg).unwrap();
        assert!((r.eps - 0.1).abs() < 1e-12);
        for row in &r.rows {
            // both weights are trivial, so every norm is the unweighted one
            assert!(row.measured <= row.unweighted * (1.0 + 1e-9));
            assert!((row.bumped_measured - row.measured).abs() < 1e-9 * row.measured.max(1e-300));
        }
        let bad = BumpConfig { eps: Some(0.5), ..cfg };
        assert!(epsilon_bump_chain(&k, &w, &Schedule::Dyadic, &fam, &bad).is_err());
    }
}
