//! Smooth frequency decomposition of rough homogeneous singular integrals.
//!
//! The kernel `Ω(x')/|x|^d` is split into dyadic annuli `K_k` supported in
//! `2^k < |x| < 2^{k+1}`. A compactly supported bump `φ` (radius 1/100, unit
//! mass) gives partial sums `S_j f = f * φ_j`, and the pieces
//! `T_j^N = Σ_k T_k (S_{k-N(j)} - S_{k-N(j-1)})` (with `T_0 = Σ_k T_k S_k`)
//! telescope back to the operator.
//!
//! Fourier transforms are the continuous ones, `f̂(ξ) = ∫ f(x) e^{-2πi x·ξ} dx`,
//! evaluated at the DFT frequencies `p/L` of a grid. For an annulus this has a
//! closed form through `∫_0^x J_n(s) ds/s` (or `Si` on the line), so the
//! multipliers carry no quadrature error.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::ops::RangeInclusive;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fft::NdFft;
use crate::grid::{Grid, GridFunction};
use crate::operators::kernel::{KernelSpec, RoughKernel};
use crate::special::{bessel_over_s_integral, bessel_j0, one_minus_j0, sine_integral, GaussRule};
use crate::stats::{linear_fit, LinearFit};

/// Support radius of the mollifier.
pub const MOLLIFIER_RADIUS: f64 = 0.01;

fn rough(kernel: &KernelSpec) -> Result<&RoughKernel> {
    match kernel {
        KernelSpec::Rough(r) => Ok(r),
        KernelSpec::Smooth(_) => invalid("the decomposition needs a rough homogeneous kernel"),
    }
}

fn bump(s2: f64) -> f64 {
    if s2 >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - s2)).exp()
    }
}

/// `φ(x) = c·exp(-1/(1 - |100x|²))` on `|x| < 1/100`.
#[derive(Clone, Debug)]
pub struct Mollifier {
    pub d: usize,
    /// Normalisation of the unit-radius bump `β(u) = c_1 exp(-1/(1-|u|²))`.
    unit_norm: f64,
    /// Radial nodes `s_i` and weights with `Σ w_i = 1` for `∫β(u) g(|u|) du`.
    nodes: Vec<(f64, f64)>,
    /// Normalised even moments `∫ β |u|^{2k}` for the small-argument series.
    moments: Vec<f64>,
}

fn radial_nodes(d: usize, panels: usize, rule: &GaussRule) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(panels * rule.nodes.len());
    let h = 1.0 / panels as f64;
    for p in 0..panels {
        let (a, b) = (p as f64 * h, (p + 1) as f64 * h);
        let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
        for (x, w) in rule.nodes.iter().zip(&rule.weights) {
            let s = c + r * x;
            out.push((s, w * r * bump(s * s) * s.powi(d as i32 - 1)));
        }
    }
    out
}

impl Mollifier {
    pub fn new(d: usize) -> Result<Self> {
        if d != 1 && d != 2 {
            return invalid("dimension must be 1 or 2");
        }
        let rule = GaussRule::new(24);
        let mut nodes = radial_nodes(d, 8, &rule);
        let total: f64 = nodes.iter().map(|n| n.1).sum();
        for n in nodes.iter_mut() {
            n.1 /= total;
        }
        let sphere = if d == 1 { 2.0 } else { 2.0 * PI };
        let moments = (0..16)
            .map(|k| nodes.iter().map(|(s, w)| w * s.powi(2 * k)).sum())
            .collect();
        Ok(Mollifier {
            d,
            unit_norm: 1.0 / (sphere * total),
            nodes,
            moments,
        })
    }

    /// Unit-radius bump `β(u)`, integrating to one.
    pub fn unit(&self, u2: f64) -> f64 {
        self.unit_norm * bump(u2)
    }

    pub fn phi(&self, x: &[f64]) -> f64 {
        let s = 1.0 / MOLLIFIER_RADIUS;
        let u2: f64 = x.iter().map(|v| (v * s).powi(2)).sum();
        s.powi(self.d as i32) * self.unit(u2)
    }

    /// `ψ(x) = φ(x) - 2^d φ(2x)`, so that `ψ̂(ξ) = φ̂(ξ) - φ̂(2ξ)`.
    pub fn psi(&self, x: &[f64]) -> f64 {
        let x2: Vec<f64> = x.iter().map(|v| 0.5 * v).collect();
        self.phi(x) - 2f64.powi(-(self.d as i32)) * self.phi(&x2)
    }

    /// `1 - φ̂(ρ)` for `|ξ| = ρ`, accurate for tiny `ρ`.
    pub fn one_minus_hat(&self, rho: f64) -> f64 {
        let z = 2.0 * PI * rho.abs() * MOLLIFIER_RADIUS;
        if z == 0.0 {
            return 0.0;
        }
        if z < 0.5 {
            // 1 - J_0(zs) or 1 - cos(zs), termwise against the moments
            let mut sum = 0.0;
            let mut c = 1.0;
            for k in 1..12 {
                c *= if self.d == 2 {
                    -(0.5 * z).powi(2) / (k * k) as f64
                } else {
                    -z * z / ((2 * k - 1) * (2 * k)) as f64
                };
                sum -= c * self.moments[k];
            }
            return sum;
        }
        let g = |s: f64| {
            if self.d == 2 {
                one_minus_j0(z * s)
            } else {
                2.0 * (0.5 * z * s).sin().powi(2)
            }
        };
        if z < 40.0 {
            return self.nodes.iter().map(|(s, w)| w * g(*s)).sum();
        }
        let panels = (z / 4.0).ceil() as usize;
        let nodes = radial_nodes(self.d, panels, &GaussRule::new(24));
        let total: f64 = nodes.iter().map(|n| n.1).sum();
        nodes.iter().map(|(s, w)| w * g(*s)).sum::<f64>() / total
    }

    pub fn hat(&self, rho: f64) -> f64 {
        1.0 - self.one_minus_hat(rho)
    }

    pub fn psi_hat(&self, rho: f64) -> f64 {
        self.one_minus_hat(2.0 * rho) - self.one_minus_hat(rho)
    }

    /// `φ̂` at the DFT frequencies of `grid`, FFT order.
    pub fn hat_on(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.len()).map(|i| self.hat(norm(&frequency(grid, i)))).collect()
    }

    /// Direct evaluation of `φ̂(ρ)` from the radial profile, for cross-checks.
    pub fn hat_direct(&self, rho: f64) -> f64 {
        let z = 2.0 * PI * rho * MOLLIFIER_RADIUS;
        self.nodes
            .iter()
            .map(|(s, w)| w * if self.d == 2 { bessel_j0(z * s) } else { (z * s).cos() })
            .sum()
    }
}

pub fn build_mollifier(d: usize) -> Result<Mollifier> {
    Mollifier::new(d)
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn signed(t: usize, n: usize) -> i64 {
    if t < n / 2 {
        t as i64
    } else {
        t as i64 - n as i64
    }
}

fn frequency_index(grid: &Grid, i: usize) -> [i64; 2] {
    let n = grid.n;
    if grid.d == 1 {
        [signed(i, n), 0]
    } else {
        [signed(i % n, n), signed(i / n, n)]
    }
}

/// DFT frequency `p/L` of flat index `i` (FFT order).
pub fn frequency(grid: &Grid, i: usize) -> Vec<f64> {
    let p = frequency_index(grid, i);
    p[..grid.d].iter().map(|v| *v as f64 / grid.side).collect()
}

/// Annuli `2^k < |x| < 2^{k+1}` with inner radius at least four cells and
/// outer radius at most an eighth of the side.
pub fn resolvable_levels(grid: &Grid) -> Result<RangeInclusive<i32>> {
    let kmin = (4.0 * grid.h()).log2().ceil() as i32;
    let kmax = (grid.side / 8.0).log2().floor() as i32 - 1;
    if kmin > kmax {
        return Err(Error::InvalidResolution(format!(
            "no dyadic annulus fits between 4 cells and L/8 on a grid with n = {}",
            grid.n
        )));
    }
    Ok(kmin..=kmax)
}

fn check_level(grid: &Grid, k: i32) -> Result<()> {
    let ks = resolvable_levels(grid)?;
    if !ks.contains(&k) {
        return Err(Error::InvalidResolution(format!(
            "annulus level {k} outside the resolvable range {}..={}",
            ks.start(),
            ks.end()
        )));
    }
    Ok(())
}

/// `K_k` sampled at the grid points.
pub fn annular_kernel(kernel: &KernelSpec, k: i32, grid: Grid) -> Result<GridFunction> {
    let r = rough(kernel)?;
    if r.d != grid.d {
        return invalid("kernel and grid dimensions differ");
    }
    check_level(&grid, k)?;
    let (lo, hi) = (2f64.powi(k), 2f64.powi(k + 1));
    Ok(GridFunction::from_fn(grid, |x| {
        let t = norm(x);
        if lo < t && t < hi {
            kernel.eval(x)
        } else {
            Complex64::new(0.0, 0.0)
        }
    }))
}

fn mode(r: &RoughKernel, n: i32) -> Complex64 {
    r.modes
        .iter()
        .find(|(m, _)| *m == n)
        .map(|(_, c)| *c)
        .unwrap_or_default()
}

/// Radial part of `K̂_k` for angular mode `n` at `|ξ| = rho` (`Si` difference in 1D).
fn annulus_radial(d: usize, n: i32, k: i32, rho: f64) -> f64 {
    let a = 2.0 * PI * 2f64.powi(k) * rho;
    if d == 1 {
        sine_integral(2.0 * a) - sine_integral(a)
    } else {
        bessel_over_s_integral(n, 2.0 * a) - bessel_over_s_integral(n, a)
    }
}

/// Angular factor multiplying the radial part for mode `n` at direction `xi`.
fn annulus_angular(r: &RoughKernel, n: i32, xi: &[f64]) -> Complex64 {
    if r.d == 1 {
        let jump = mode(r, 1) - mode(r, -1);
        Complex64::new(0.0, -xi[0].signum()) * jump
    } else {
        let beta = xi[1].atan2(xi[0]);
        mode(r, n) * 2.0 * PI * Complex64::from_polar(1.0, n as f64 * (beta - 0.5 * PI))
    }
}

fn radial_modes(r: &RoughKernel) -> Vec<i32> {
    if r.d == 1 {
        vec![1]
    } else {
        r.modes.iter().map(|(n, _)| *n).filter(|n| *n != 0).collect()
    }
}

/// Continuous Fourier transform of `K_k` at `xi`.
pub fn annulus_symbol(kernel: &KernelSpec, k: i32, xi: &[f64]) -> Result<Complex64> {
    let r = rough(kernel)?;
    let rho = norm(xi);
    if rho == 0.0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    Ok(radial_modes(r)
        .into_iter()
        .map(|n| annulus_angular(r, n, xi) * annulus_radial(r.d, n, k, rho))
        .sum())
}

/// `K̂_k` at the DFT frequencies of `grid`, FFT order.
pub fn multiplier_of_annulus(kernel: &KernelSpec, k: i32, grid: Grid) -> Result<Vec<Complex64>> {
    let dec = Decomposition::with_levels(kernel, grid, k..=k)?;
    Ok(dec.annulus_field(k))
}

/// `N(j)`: `N(0) = 0`, strictly increasing.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Schedule {
    /// `N(j) = 2^j` for `j ≥ 1`.
    Dyadic,
    /// `N(j) = j`.
    Identity,
    Custom(Vec<u32>),
}

impl Schedule {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dyadic" | "pow2" => Ok(Schedule::Dyadic),
            "identity" | "linear" => Ok(Schedule::Identity),
            _ => {
                let body = s.strip_prefix("custom:").unwrap_or(s);
                let v = body
                    .split(',')
                    .map(|t| t.trim().parse::<u32>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::InvalidInput(format!("unknown schedule {s:?}")))?;
                let sch = Schedule::Custom(v);
                sch.validate()?;
                Ok(sch)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Schedule::Custom(v) = self {
            if v.first() != Some(&0) {
                return invalid("schedule must start at N(0) = 0");
            }
            if v.windows(2).any(|w| w[1] <= w[0]) {
                return invalid("schedule must be strictly increasing");
            }
        }
        Ok(())
    }

    pub fn n(&self, j: usize) -> Result<u32> {
        match self {
            Schedule::Dyadic => match j {
                0 => Ok(0),
                j if j < 31 => Ok(1 << j),
                _ => invalid("schedule index too large"),
            },
            Schedule::Identity => Ok(j as u32),
            Schedule::Custom(v) => v
                .get(j)
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("schedule has no entry {j}"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Schedule::Dyadic => "dyadic".into(),
            Schedule::Identity => "identity".into(),
            Schedule::Custom(v) => format!(
                "custom:{}",
                v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
            ),
        }
    }
}

/// Cached radial tables for the multipliers of one kernel on one frequency grid.
pub struct Decomposition {
    kernel: RoughKernel,
    /// Grid whose DFT frequencies carry the multipliers.
    pub grid: Grid,
    pub levels: RangeInclusive<i32>,
    pub mollifier: Mollifier,
    modes: Vec<i32>,
    radii: Vec<f64>,
    point_radius: Vec<usize>,
    /// `[mode][level][radius]`
    radial: Vec<Vec<Vec<f64>>>,
}

impl Decomposition {
    /// Resolvable annuli of `grid`, multipliers on the DFT frequencies of `grid`.
    pub fn new(kernel: &KernelSpec, grid: Grid) -> Result<Self> {
        let levels = resolvable_levels(&grid)?;
        Self::with_levels(kernel, grid, levels)
    }

    pub fn with_levels(kernel: &KernelSpec, grid: Grid, levels: RangeInclusive<i32>) -> Result<Self> {
        let r = rough(kernel)?.clone();
        if r.d != grid.d {
            return invalid("kernel and grid dimensions differ");
        }
        if levels.is_empty() {
            return invalid("empty annulus range");
        }
        let mut key_of: HashMap<i64, usize> = HashMap::new();
        let mut keys = Vec::new();
        let point_radius = (0..grid.len())
            .map(|i| {
                let p = frequency_index(&grid, i);
                let key = p[0] * p[0] + p[1] * p[1];
                *key_of.entry(key).or_insert_with(|| {
                    keys.push(key);
                    keys.len() - 1
                })
            })
            .collect();
        let radii: Vec<f64> = keys.iter().map(|k| (*k as f64).sqrt() / grid.side).collect();
        let modes = radial_modes(&r);
        let radial = modes
            .iter()
            .map(|&n| {
                levels
                    .clone()
                    .map(|k| radii.par_iter().map(|&rho| annulus_radial(r.d, n, k, rho)).collect())
                    .collect()
            })
            .collect();
        Ok(Decomposition {
            kernel: r,
            mollifier: Mollifier::new(grid.d)?,
            grid,
            levels,
            modes,
            radii,
            point_radius,
            radial,
        })
    }

    /// `Σ_k K̂_k(ξ) W_k(|ξ|)` over the grid, given per-radius level weights.
    fn combine(&self, weights: impl Fn(i32, f64) -> f64 + Sync) -> Vec<Complex64> {
        let per_radius: Vec<Vec<f64>> = self
            .radii
            .par_iter()
            .enumerate()
            .map(|(ri, &rho)| {
                let w: Vec<f64> = self.levels.clone().map(|k| weights(k, rho)).collect();
                self.radial
                    .iter()
                    .map(|by_level| by_level.iter().zip(&w).map(|(a, b)| a[ri] * b).sum())
                    .collect()
            })
            .collect();
        (0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                let xi = frequency(&self.grid, i);
                if norm(&xi) == 0.0 {
                    return Complex64::new(0.0, 0.0);
                }
                let rad = &per_radius[self.point_radius[i]];
                self.modes
                    .iter()
                    .zip(rad)
                    .map(|(&n, v)| annulus_angular(&self.kernel, n, &xi) * *v)
                    .sum()
            })
            .collect()
    }

    pub fn annulus_field(&self, k: i32) -> Vec<Complex64> {
        self.combine(|kk, _| if kk == k { 1.0 } else { 0.0 })
    }

    /// `Σ_k K̂_k`, the multiplier of the truncated operator.
    pub fn total_multiplier(&self) -> Vec<Complex64> {
        self.combine(|_, _| 1.0)
    }

    /// `m_j` for the given schedule.
    pub fn piece_multiplier(&self, schedule: &Schedule, j: usize) -> Result<Vec<Complex64>> {
        let moll = &self.mollifier;
        if j == 0 {
            return Ok(self.combine(|k, rho| moll.hat(2f64.powi(k) * rho)));
        }
        let (a, b) = (schedule.n(j)? as i32, schedule.n(j - 1)? as i32);
        if a <= b {
            return invalid("schedule must be strictly increasing");
        }
        Ok(self.combine(|k, rho| {
            moll.one_minus_hat(2f64.powi(k - b) * rho) - moll.one_minus_hat(2f64.powi(k - a) * rho)
        }))
    }

    /// Multiplier of `Σ_{j ≤ J} T_j^N`.
    pub fn partial_piece_sum(&self, schedule: &Schedule, big_j: usize) -> Result<Vec<Complex64>> {
        let a = schedule.n(big_j)? as i32;
        let moll = &self.mollifier;
        Ok(self.combine(|k, rho| moll.hat(2f64.powi(k - a) * rho)))
    }

    /// `sup_ξ |m_j(ξ)|` over the frequency grid.
    pub fn piece_l2_norm(&self, schedule: &Schedule, j: usize) -> Result<f64> {
        Ok(self
            .piece_multiplier(schedule, j)?
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max))
    }

    /// Largest `|K̂_k(ξ) - K̂_0(2^k ξ)|` on the grid, together with the largest
    /// mismatch against other cached levels at frequencies both grids share.
    pub fn scale_invariance_error(&self) -> Result<f64> {
        let spec = KernelSpec::Rough(self.kernel.clone());
        let base = *self.levels.start();
        let base_field = self.annulus_field(base);
        let mut worst = 0.0f64;
        for k in self.levels.clone() {
            let field = self.annulus_field(k);
            let s = 2f64.powi(k);
            for i in 0..self.grid.len() {
                let xi: Vec<f64> = frequency(&self.grid, i).iter().map(|v| v * s).collect();
                worst = worst.max((field[i] - annulus_symbol(&spec, 0, &xi)?).norm());
                // K̂_k(ξ) = K̂_base(2^{k-base} ξ) when that point is on the grid
                let p = frequency_index(&self.grid, i);
                let f = 1i64 << (k - base);
                let q = [p[0] * f, p[1] * f];
                let half = (self.grid.n / 2) as i64;
                if q.iter().all(|v| -half <= *v && *v < half) {
                    let n = self.grid.n as i64;
                    let wrap = |v: i64| v.rem_euclid(n) as usize;
                    let j = if self.grid.d == 1 { wrap(q[0]) } else { wrap(q[0]) + self.grid.n * wrap(q[1]) };
                    worst = worst.max((field[i] - base_field[j]).norm());
                }
            }
        }
        Ok(worst)
    }

    /// Applies a multiplier sampled on `self.grid` to `f`.
    ///
    /// Periodic data must live on `self.grid`; other data is zero-padded into
    /// `self.grid`, which must then be twice as fine in frequency.
    pub fn apply(&self, multiplier: &[Complex64], f: &GridFunction) -> Result<GridFunction> {
        apply_multiplier(&self.grid, multiplier, f)
    }
}

pub(crate) fn apply_multiplier(fg: &Grid, multiplier: &[Complex64], f: &GridFunction) -> Result<GridFunction> {
    let g = f.grid;
    let same = *fg == g;
    if !same && !(fg.d == g.d && fg.n == 2 * g.n && (fg.side - 2.0 * g.side).abs() < 1e-12 * g.side) {
        return invalid("multiplier grid must equal the data grid or its zero-padded double");
    }
    if multiplier.len() != fg.len() {
        return invalid("multiplier length does not match its grid");
    }
    let p = fg.n;
    let n = g.n;
    let mut buf = vec![Complex64::new(0.0, 0.0); fg.len()];
    if g.d == 1 {
        buf[..n].copy_from_slice(&f.values);
    } else {
        for j in 0..n {
            buf[j * p..j * p + n].copy_from_slice(&f.values[j * n..(j + 1) * n]);
        }
    }
    let fft = NdFft::new(p, g.d);
    fft.forward(&mut buf);
    for (v, m) in buf.iter_mut().zip(multiplier) {
        *v *= m;
    }
    fft.inverse(&mut buf);
    let values = if g.d == 1 {
        buf[..n].to_vec()
    } else {
        (0..n).flat_map(|j| buf[j * p..j * p + n].to_vec()).collect()
    };
    let mut out = GridFunction::from_values(g, values)?;
    out.periodic = f.periodic;
    Ok(out)
}

/// Frequency grid used for `f`: itself when periodic, the doubled domain otherwise.
pub fn frequency_grid_for(f: &GridFunction) -> Result<Grid> {
    if f.periodic {
        Ok(f.grid)
    } else {
        Grid::new(f.grid.d, 2 * f.grid.n, 2.0 * f.grid.side)
    }
}

/// `S_j f = f * φ_j` with `φ_j(x) = 2^{-jd} φ(x/2^j)`.
pub fn partial_sum(f: &GridFunction, j: i32, mollifier: &Mollifier) -> Result<GridFunction> {
    if mollifier.d != f.grid.d {
        return invalid("mollifier and grid dimensions differ");
    }
    let fg = frequency_grid_for(f)?;
    let s = 2f64.powi(j);
    let m: Vec<Complex64> = (0..fg.len())
        .map(|i| Complex64::new(mollifier.hat(s * norm(&frequency(&fg, i))), 0.0))
        .collect();
    apply_multiplier(&fg, &m, f)
}

/// `T_j^N f` through its multiplier.
pub fn piece_apply(kernel: &KernelSpec, schedule: &Schedule, j: usize, f: &GridFunction) -> Result<GridFunction> {
    let levels = resolvable_levels(&f.grid)?;
    let dec = Decomposition::with_levels(kernel, frequency_grid_for(f)?, levels)?;
    dec.apply(&dec.piece_multiplier(schedule, j)?, f)
}

/// `sup |m_j|` over the DFT frequencies of `grid`, annuli resolvable on `grid`.
pub fn piece_l2_norm(kernel: &KernelSpec, schedule: &Schedule, j: usize, grid: Grid) -> Result<f64> {
    Decomposition::new(kernel, grid)?.piece_l2_norm(schedule, j)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvelopeFit {
    /// Exponent on the flank `|2^k ξ| ≤ 1/2`.
    pub alpha_low: f64,
    /// Exponent on the flank `|2^k ξ| ≥ 2`.
    pub alpha_high: f64,
    pub c_low: f64,
    pub c_high: f64,
    /// Fraction of samples above `C min(t^α, t^{-α})` per flank.
    pub violations: f64,
    /// Tightest envelope constant per level with the fitted exponents.
    pub c_per_level: Vec<(i32, f64)>,
    pub samples: usize,
}

/// Fits `|K̂_k(ξ)| ≤ C min(|2^kξ|^α, |2^kξ|^{-α})` over all cached levels.
///
/// Exponents come from a least-squares line through the maxima of
/// quarter-octave bins in `t = |2^k ξ|`; the constant is raised until the line
/// clears every bin maximum.
pub fn envelope_fit(dec: &Decomposition) -> Result<EnvelopeFit> {
    let mut samples: Vec<(i32, f64, f64)> = Vec::new();
    for k in dec.levels.clone() {
        let field = dec.annulus_field(k);
        let s = 2f64.powi(k);
        for (i, v) in field.iter().enumerate() {
            let t = s * norm(&frequency(&dec.grid, i));
            if t > 0.0 {
                samples.push((k, t, v.norm()));
            }
        }
    }
    let bin = |t: f64| (4.0 * t.log2()).floor() as i64;
    let mut maxima: HashMap<i64, f64> = HashMap::new();
    for &(_, t, v) in &samples {
        let e = maxima.entry(bin(t)).or_insert(0.0);
        *e = e.max(v);
    }
    let flank = |low: bool| -> Result<(f64, f64)> {
        let pts: Vec<(f64, f64)> = maxima
            .iter()
            .map(|(b, v)| (2f64.powf((*b as f64 + 0.5) / 4.0), *v))
            .filter(|(t, v)| *v > 0.0 && if low { *t <= 0.5 } else { *t >= 2.0 })
            .collect();
        let x: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
        let fit = linear_fit(&x, &y)?;
        let lift = pts
            .iter()
            .map(|(t, v)| v.ln() - fit.eval(t.ln()))
            .fold(f64::NEG_INFINITY, f64::max);
        Ok((fit.slope, (fit.intercept + lift).exp()))
    };
    let (s_low, c_low) = flank(true)?;
    let (s_high, c_high) = flank(false)?;
    let envelope = |t: f64| {
        if t <= 1.0 {
            c_low * t.powf(s_low)
        } else {
            c_high * t.powf(s_high)
        }
    };
    let mut flagged = 0usize;
    let mut counted = 0usize;
    let mut per_level: HashMap<i32, f64> = HashMap::new();
    for &(k, t, v) in &samples {
        if t <= 0.5 || t >= 2.0 {
            counted += 1;
            if v > envelope(t) * (1.0 + 1e-9) {
                flagged += 1;
            }
            let shape = if t <= 1.0 { t.powf(s_low) } else { t.powf(s_high) };
            let e = per_level.entry(k).or_insert(0.0);
            *e = e.max(v / shape);
        }
    }
    let mut c_per_level: Vec<(i32, f64)> = per_level.into_iter().collect();
    c_per_level.sort_by_key(|p| p.0);
    Ok(EnvelopeFit {
        alpha_low: s_low,
        alpha_high: -s_high,
        c_low,
        c_high,
        violations: flagged as f64 / counted.max(1) as f64,
        c_per_level,
        samples: samples.len(),
    })
}

/// Quadrature of `K_k * φ_σ` at `x`, with `φ_σ(z) = σ^{-d} β(z/σ)`.
struct AnnulusQuadrature {
    rule: GaussRule,
}

impl AnnulusQuadrature {
    fn new() -> Self {
        AnnulusQuadrature { rule: GaussRule::new(16) }
    }

    fn conv(&self, r: &RoughKernel, moll: &Mollifier, k: i32, sigma: f64, x: &[f64]) -> Complex64 {
        let (r1, r2) = (2f64.powi(k), 2f64.powi(k + 1));
        let zero = Complex64::new(0.0, 0.0);
        let rad = norm(x);
        if rad + sigma <= r1 || rad - sigma >= r2 {
            return zero;
        }
        if r.d == 1 {
            let x = x[0];
            let mut acc = zero;
            for (lo, hi) in [((x - r2) / sigma, (x - r1) / sigma), ((x + r1) / sigma, (x + r2) / sigma)] {
                let (lo, hi) = (lo.max(-1.0), hi.min(1.0));
                if lo < hi {
                    acc += self.rule.integrate(lo, hi, |a| {
                        let p = x - sigma * a;
                        (r.omega)(&[p.signum()]) * (moll.unit(a * a) / p.abs())
                    });
                }
            }
            return acc;
        }
        // a along x/|x|, b across; for fixed b the annulus is one a-interval
        let (ex, ey) = (x[0] / rad, x[1] / rad);
        self.rule.integrate(-1.0, 1.0, |b| {
            let half = (1.0 - b * b).max(0.0).sqrt();
            let sb2 = (sigma * b).powi(2);
            let l1 = (r1 * r1 - sb2).max(0.0).sqrt();
            let l2 = (r2 * r2 - sb2).max(0.0).sqrt();
            let lo = ((rad - l2) / sigma).max(-half);
            let hi = ((rad - l1) / sigma).min(half);
            if lo >= hi {
                return zero;
            }
            self.rule.integrate(lo, hi, |a| {
                let px = x[0] - sigma * (a * ex - b * ey);
                let py = x[1] - sigma * (a * ey + b * ex);
                let p2 = px * px + py * py;
                let pn = p2.sqrt();
                (r.omega)(&[px / pn, py / pn]) * (moll.unit(a * a + b * b) / p2)
            })
        })
    }
}

/// Spatial kernel `K_j^N` of a piece, by quadrature of mollified annuli.
pub struct PieceKernel<'a> {
    dec: &'a Decomposition,
    schedule: Schedule,
    pub j: usize,
    scales: (i32, Option<i32>),
    quad: AnnulusQuadrature,
}

impl<'a> PieceKernel<'a> {
    pub fn new(dec: &'a Decomposition, schedule: &Schedule, j: usize) -> Result<Self> {
        let scales = if j == 0 {
            (0, None)
        } else {
            (schedule.n(j)? as i32, Some(schedule.n(j - 1)? as i32))
        };
        Ok(PieceKernel {
            dec,
            schedule: schedule.clone(),
            j,
            scales,
            quad: AnnulusQuadrature::new(),
        })
    }

    pub fn n(&self) -> u32 {
        self.schedule.n(self.j).unwrap_or(0)
    }

    pub fn eval(&self, x: &[f64]) -> Complex64 {
        let r = &self.dec.kernel;
        let m = &self.dec.mollifier;
        self.dec
            .levels
            .clone()
            .map(|k| {
                let s = |n: i32| 2f64.powi(k - n) * MOLLIFIER_RADIUS;
                let narrow = self.quad.conv(r, m, k, s(self.scales.0), x);
                match self.scales.1 {
                    None => narrow,
                    Some(b) => narrow - self.quad.conv(r, m, k, s(b), x),
                }
            })
            .sum()
    }

    /// Mollifier radii in use at level `k`.
    fn widths(&self, k: i32) -> Vec<f64> {
        let mut w = vec![2f64.powi(k - self.scales.0) * MOLLIFIER_RADIUS];
        if let Some(b) = self.scales.1 {
            w.push(2f64.powi(k - b) * MOLLIFIER_RADIUS);
        }
        w
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PieceEstimates {
    pub j: usize,
    pub n_j: u32,
    pub l2_norm: f64,
    pub size_const: f64,
    pub dini: f64,
    /// `-log2(|m_j|_∞ / |m_0|_∞) / N(j-1)`, zero for `j ≤ 1`.
    pub alpha_fit: f64,
    /// `max ω(t) / min(1, 2^{N(j)} t)` over the measured buckets.
    pub envelope_const: f64,
    /// `max ω(t) / (2^{N(j)} t)` over buckets with `t ≤ 2^{-N(j)-8}`.
    pub gradient_const: f64,
    /// Bucket upper ends `2^{-i}` and monotone empirical modulus there.
    pub modulus: Vec<(f64, f64)>,
}

/// Sampling controls for the kernel estimates.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EstimateSampling {
    pub pairs_per_bucket: usize,
    /// Buckets extend down to `t = 2^{-N(j)-extra_octaves}`.
    pub extra_octaves: u32,
    pub seed: u64,
}

impl Default for EstimateSampling {
    fn default() -> Self {
        EstimateSampling {
            pairs_per_bucket: 1000,
            extra_octaves: 12,
            seed: 7,
        }
    }
}

fn random_direction(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    if d == 1 {
        vec![if rng.gen::<bool>() { 1.0 } else { -1.0 }]
    } else {
        let t = rng.gen_range(0.0..2.0 * PI);
        vec![t.cos(), t.sin()]
    }
}

/// Size constant, empirical modulus and Dini integral of `K_j^N`.
///
/// Pairs `(z, z')` with `|z - z'| = t|z|` are drawn per octave of `t`, half of
/// them straddling an annulus edge at the mollifier scale and half with `|z|`
/// log-uniform over the annuli. The Dini integral is the upper Riemann sum
/// over octaves of the monotone envelope plus the linear tail below the
/// smallest octave.
pub fn piece_kernel_estimates(
    dec: &Decomposition,
    schedule: &Schedule,
    j: usize,
    sampling: &EstimateSampling,
) -> Result<PieceEstimates> {
    let pk = PieceKernel::new(dec, schedule, j)?;
    let d = dec.grid.d;
    let n_j = pk.n();
    let kmin = *dec.levels.start();
    let kmax = *dec.levels.end();
    let dist = |z: &[f64]| norm(z).powi(d as i32);

    let mut probes: Vec<Vec<f64>> = Vec::new();
    let angles = if d == 1 { vec![0.0, PI] } else { (0..4).map(|a| a as f64 * PI / 8.0 + 0.1).collect() };
    for k in dec.levels.clone() {
        for edge in [2f64.powi(k), 2f64.powi(k + 1)] {
            for w in pk.widths(k) {
                for u in 0..=48 {
                    let rad = edge + w * (u as f64 / 20.0 - 1.2);
                    for &a in &angles {
                        probes.push(if d == 1 { vec![rad * a.cos()] } else { vec![rad * a.cos(), rad * a.sin()] });
                    }
                }
            }
        }
    }
    for u in 0..=200 {
        let rad = 2f64.powf(kmin as f64 - 0.5 + (kmax - kmin + 2) as f64 * u as f64 / 200.0);
        probes.push(if d == 1 { vec![rad] } else { vec![rad * 0.6, rad * 0.8] });
    }
    let size_const = probes
        .par_iter()
        .map(|x| dist(x) * pk.eval(x).norm())
        .reduce(|| 0.0, f64::max);

    let octaves = n_j + sampling.extra_octaves;
    let raw: Vec<f64> = (1..=octaves)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed ^ ((j as u64) << 32) ^ i as u64);
            let mut best = 0.0f64;
            for p in 0..sampling.pairs_per_bucket {
                let t = 2f64.powf(-(i as f64) - rng.gen::<f64>());
                let dir = random_direction(d, &mut rng);
                let rad = if p % 2 == 0 {
                    let k = rng.gen_range(kmin..=kmax);
                    let edge = if rng.gen::<bool>() { 2f64.powi(k) } else { 2f64.powi(k + 1) };
                    let ws = pk.widths(k);
                    let w = ws[rng.gen_range(0..ws.len())];
                    edge + w * rng.gen_range(-1.5..1.5)
                } else {
                    2f64.powf(rng.gen_range(kmin as f64 - 0.5..kmax as f64 + 1.5))
                };
                let z: Vec<f64> = dir.iter().map(|v| v * rad).collect();
                let step = random_direction(d, &mut rng);
                let zp: Vec<f64> = z.iter().zip(&step).map(|(a, b)| a + t * rad * b).collect();
                let neg = |v: &[f64]| v.iter().map(|c| -c).collect::<Vec<f64>>();
                let q = (pk.eval(&z) - pk.eval(&zp)).norm() + (pk.eval(&neg(&z)) - pk.eval(&neg(&zp))).norm();
                best = best.max(q * dist(&z));
            }
            best
        })
        .collect();
    // raw[i-1] covers t in [2^{-i-1}, 2^{-i})
    let mut mono = raw.clone();
    for i in (0..mono.len().saturating_sub(1)).rev() {
        mono[i] = mono[i].max(mono[i + 1]);
    }
    let ln2 = std::f64::consts::LN_2;
    // [1/2, 1] uses the value at 1/2; each octave its upper end; linear tail
    let dini = mono[0] * ln2 + mono.iter().sum::<f64>() * ln2 + mono.last().copied().unwrap_or(0.0);
    let scale = 2f64.powi(n_j as i32);
    let mut envelope_const = 0.0f64;
    let mut gradient_const = 0.0f64;
    let mut modulus = Vec::with_capacity(mono.len());
    for (idx, w) in mono.iter().enumerate() {
        let t = 2f64.powi(-(idx as i32 + 1));
        modulus.push((t, *w));
        envelope_const = envelope_const.max(w / (scale * t).min(1.0));
        if idx as i64 + 1 >= n_j as i64 + 8 {
            gradient_const = gradient_const.max(w / (scale * t));
        }
    }
    let l2_norm = dec.piece_l2_norm(schedule, j)?;
    let alpha_fit = if j >= 2 {
        let n0 = dec.piece_l2_norm(schedule, 0)?;
        -(l2_norm / n0).log2() / schedule.n(j - 1)? as f64
    } else {
        0.0
    };
    Ok(PieceEstimates {
        j,
        n_j,
        l2_norm,
        size_const,
        dini,
        alpha_fit,
        envelope_const,
        gradient_const,
        modulus,
    })
}

/// `log2 |m_j|_∞` against `N(j-1)` over `j = 1..=j_max`.
pub fn piece_decay_fit(dec: &Decomposition, schedule: &Schedule, j_max: usize) -> Result<(Vec<(u32, f64)>, LinearFit)> {
    let mut pts = Vec::new();
    for j in 1..=j_max {
        pts.push((schedule.n(j - 1)?, dec.piece_l2_norm(schedule, j)?));
    }
    let x: Vec<f64> = pts.iter().map(|p| p.0 as f64).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1.log2()).collect();
    Ok((pts, linear_fit(&x, &y)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b1() -> KernelSpec {
        KernelSpec::beurling(1).unwrap()
    }

    #[test]
    fn mollifier_normalisation_and_transform() {
        for d in [1, 2] {
            let m = Mollifier::new(d).unwrap();
            // mass by a fine midpoint rule on the support
            let steps = 40_000;
            let h = 2.0 * MOLLIFIER_RADIUS / steps as f64;
            let mass: f64 = if d == 1 {
                (0..steps).map(|i| m.phi(&[-MOLLIFIER_RADIUS + (i as f64 + 0.5) * h]) * h).sum()
            } else {
                let hr = MOLLIFIER_RADIUS / steps as f64;
                (0..steps)
                    .map(|i| {
                        let r = (i as f64 + 0.5) * hr;
                        m.phi(&[r, 0.0]) * 2.0 * PI * r * hr
                    })
                    .sum()
            };
            assert!((mass - 1.0).abs() < 1e-9, "{mass}");
            assert_eq!(m.phi(&vec![MOLLIFIER_RADIUS * 1.0001; 1]), 0.0);
            assert_eq!(m.hat(0.0), 1.0);
            assert_eq!(m.psi_hat(0.0), 0.0);
            for rho in [0.3, 3.0, 7.9, 10.0, 100.0, 900.0] {
                assert!((m.hat(rho) - m.hat_direct(rho)).abs() < 1e-12, "{rho}");
            }
            // tiny arguments keep relative accuracy
            let r = m.one_minus_hat(1e-12);
            let expect = m.moments[1] * (2.0 * PI * 1e-12 * MOLLIFIER_RADIUS).powi(2) / if d == 2 { 4.0 } else { 2.0 };
            assert!((r - expect).abs() < 1e-10 * expect);
            // |ψ̂(ξ)| ≤ C min(|ξ|, 1)
            let c = (1..400)
                .map(|i| {
                    let rho = 10f64.powf(-4.0 + 8.0 * i as f64 / 400.0);
                    m.psi_hat(rho).abs() / rho.min(1.0)
                })
                .fold(0.0, f64::max);
            assert!(c < 1.0, "{c}");
        }
    }

    #[test]
    fn psi_has_zero_mass() {
        let m = Mollifier::new(1).unwrap();
        let steps = 8000;
        let h = 4.0 * MOLLIFIER_RADIUS / steps as f64;
        let mass: f64 = (0..steps).map(|i| m.psi(&[-2.0 * MOLLIFIER_RADIUS + (i as f64 + 0.5) * h]) * h).sum();
        assert!(mass.abs() < 1e-10);
    }

    #[test]
    fn annular_samples() {
        let g = Grid::new(2, 256, 1.0).unwrap();
        assert_eq!(resolvable_levels(&g).unwrap(), -6..=-4);
        let k = -5;
        let kk = annular_kernel(&b1(), k, g).unwrap();
        let other = annular_kernel(&b1(), -4, g).unwrap();
        assert!(kk.values.iter().zip(&other.values).all(|(a, b)| (a * b).norm() == 0.0));
        let sup = kk.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let rim = 2f64.powi(-2 * k) / PI;
        assert!(sup <= rim && sup > 0.9 * rim);
        let mass: Complex64 = kk.values.iter().sum();
        assert!(mass.norm() * g.cell_volume() < 1e-12);
        assert!(annular_kernel(&b1(), -7, g).is_err());
        assert!(annular_kernel(&KernelSpec::from_name("smooth-dini").unwrap(), -5, g).is_err());
    }

    #[test]
    fn full_symbol_limits() {
        // Σ_k over many annuli approaches the unimodular symbol
        let xi = [0.3, 0.7];
        let total: Complex64 = (-30..30).map(|k| annulus_symbol(&b1(), k, &xi).unwrap()).sum();
        let z = Complex64::new(xi[0], xi[1]);
        assert!((total - z.conj() / z).norm() < 1e-6, "{total}");
        let odd = KernelSpec::odd1d();
        let t1: Complex64 = (-30..30).map(|k| annulus_symbol(&odd, k, &[0.4]).unwrap()).sum();
        assert!((t1 - Complex64::new(0.0, -PI)).norm() < 1e-6, "{t1}");
        assert_eq!(annulus_symbol(&b1(), 0, &[0.0, 0.0]).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn symbol_matches_spatial_quadrature() {
        // K̂_0(ξ) against a polar quadrature of the annulus
        let xi = [0.37, -0.21];
        let rule = GaussRule::new(64);
        let mut acc = Complex64::new(0.0, 0.0);
        let k = b1();
        for p in 0..16 {
            let (a, b) = (1.0 + p as f64 / 16.0, 1.0 + (p + 1) as f64 / 16.0);
            acc += rule.integrate(a, b, |r| {
                rule.integrate(0.0, 2.0 * PI, |t| {
                    let x = [r * t.cos(), r * t.sin()];
                    k.eval(&x) * Complex64::from_polar(1.0, -2.0 * PI * (x[0] * xi[0] + x[1] * xi[1])) * r
                })
            });
        }
        let s = annulus_symbol(&k, 0, &xi).unwrap();
        assert!((acc - s).norm() < 1e-10, "{acc} {s}");
    }

    #[test]
    fn scale_collapse_on_grid() {
        let g = Grid::new(2, 64, 1.0).unwrap();
        let dec = Decomposition::with_levels(&b1(), g, -4..=-3).unwrap();
        assert!(dec.scale_invariance_error().unwrap() < 1e-8);
        let f = dec.annulus_field(-4);
        assert_eq!(f[0], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn pieces_telescope() {
        let g = Grid::new(2, 64, 1.0).unwrap();
        let dec = Decomposition::new(&b1(), g).unwrap();
        let total = dec.total_multiplier();
        let mut sum = vec![Complex64::new(0.0, 0.0); g.len()];
        let mut prev_resid = f64::INFINITY;
        for j in 0..=5 {
            let m = dec.piece_multiplier(&Schedule::Dyadic, j).unwrap();
            if j >= 1 {
                assert!(m[0].norm() == 0.0);
            }
            for (s, v) in sum.iter_mut().zip(&m) {
                *s += v;
            }
            let partial = dec.partial_piece_sum(&Schedule::Dyadic, j).unwrap();
            let resid = sum.iter().zip(&total).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(sum.iter().zip(&partial).all(|(a, b)| (a - b).norm() < 1e-12));
            assert!(resid <= prev_resid + 1e-15);
            // tail bounded by the remaining piece norms
            let tail: f64 = (j + 1..=8).map(|i| dec.piece_l2_norm(&Schedule::Dyadic, i).unwrap()).sum();
            assert!(resid <= tail + 1e-12, "{j} {resid} {tail}");
            prev_resid = resid;
        }
        assert!(prev_resid < 1e-12);
    }

    #[test]
    fn identity_schedule_is_psi_pieces() {
        let g = Grid::new(1, 256, 1.0).unwrap();
        let odd = KernelSpec::odd1d();
        let dec = Decomposition::new(&odd, g).unwrap();
        let j = 3;
        let m = dec.piece_multiplier(&Schedule::Identity, j).unwrap();
        for i in 1..g.len() {
            let xi = frequency(&g, i);
            let direct: Complex64 = dec
                .levels
                .clone()
                .map(|k| {
                    annulus_symbol(&odd, k, &xi).unwrap() * dec.mollifier.psi_hat(2f64.powi(k - j as i32) * xi[0].abs())
                })
                .sum();
            assert!((m[i] - direct).norm() < 1e-12);
        }
    }

    #[test]
    fn partial_sums() {
        let g = Grid::new(2, 32, 1.0).unwrap();
        let m = Mollifier::new(2).unwrap();
        let mut c = GridFunction::constant(g, 2.5);
        c.periodic = true;
        let s = partial_sum(&c, 4, &m).unwrap();
        assert!(s.values.iter().all(|v| (v - 2.5).norm() < 1e-12));
        let f = GridFunction::from_fn(g, |x| Complex64::new((-40.0 * (x[0] * x[0] + x[1] * x[1])).exp(), x[0]));
        let a = partial_sum(&f, 2, &m).unwrap();
        let b = partial_sum(&f, 3, &m).unwrap();
        let fg = frequency_grid_for(&f).unwrap();
        let psi: Vec<Complex64> = (0..fg.len())
            .map(|i| Complex64::new(m.psi_hat(4.0 * norm(&frequency(&fg, i))), 0.0))
            .collect();
        let diff = apply_multiplier(&fg, &psi, &f).unwrap();
        for i in 0..g.len() {
            assert!((a.values[i] - b.values[i] - diff.values[i]).norm() < 1e-10);
        }
        let fine = partial_sum(&f, -12, &m).unwrap();
        assert!(fine.sub(&f).l2_norm() < 1e-6 * f.l2_norm());
        let big = Grid::new(2, 128, 1.0).unwrap();
        let z = piece_apply(&b1(), &Schedule::Dyadic, 1, &GridFunction::zeros(big)).unwrap();
        assert!(z.is_zero());
    }

    #[test]
    fn rotation_keeps_norms() {
        let g = Grid::new(2, 64, 1.0).unwrap();
        let rot = KernelSpec::rough_from_angle(
            "rotated",
            std::sync::Arc::new(|phi: f64| Complex64::from_polar(-1.0 / PI, -2.0 * (phi - 0.3))),
        )
        .unwrap();
        let a = Decomposition::new(&b1(), g).unwrap();
        let b = Decomposition::new(&rot, g).unwrap();
        for j in 0..3 {
            let (x, y) = (a.piece_l2_norm(&Schedule::Dyadic, j).unwrap(), b.piece_l2_norm(&Schedule::Dyadic, j).unwrap());
            assert!((x - y).abs() < 1e-8 * x, "{x} {y}");
        }
    }

    #[test]
    fn mollified_annulus_matches_riemann_sum() {
        let odd = KernelSpec::odd1d();
        let KernelSpec::Rough(r) = &odd else { unreachable!() };
        let m = Mollifier::new(1).unwrap();
        let q = AnnulusQuadrature::new();
        let sigma = 0.05;
        for x in [1.02, 1.0, 0.97, 1.5, 1.98, 2.03, -1.01] {
            let steps = 200_000;
            let h = 2.0 / steps as f64;
            let brute: f64 = (0..steps)
                .map(|i| {
                    let a = -1.0 + (i as f64 + 0.5) * h;
                    let p: f64 = x - sigma * a;
                    let inside = 1.0 < p.abs() && p.abs() < 2.0;
                    if inside { m.unit(a * a) * p.signum() / p.abs() * h } else { 0.0 }
                })
                .sum();
            let v = q.conv(r, &m, 0, sigma, &[x]);
            assert!((v.re - brute).abs() < 1e-5, "{x} {} {brute}", v.re);
        }
    }

    #[test]
    fn piece_kernel_telescopes_spatially() {
        let g = Grid::new(2, 256, 1.0).unwrap();
        let dec = Decomposition::new(&b1(), g).unwrap();
        // away from edges the pieces sum to the kernel itself
        let x = [0.03 * 0.6, 0.03 * 0.8];
        let sum: Complex64 = (0..=3).map(|j| PieceKernel::new(&dec, &Schedule::Dyadic, j).unwrap().eval(&x)).sum();
        let k = b1().eval(&x);
        assert!((sum - k).norm() < 1e-5 * k.norm(), "{sum} {k}");
        let inner = [0.001, 0.0];
        assert_eq!(PieceKernel::new(&dec, &Schedule::Dyadic, 2).unwrap().eval(&inner), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn schedules() {
        assert_eq!(Schedule::Dyadic.n(0).unwrap(), 0);
        assert_eq!(Schedule::Dyadic.n(3).unwrap(), 8);
        assert_eq!(Schedule::Identity.n(5).unwrap(), 5);
        assert_eq!(Schedule::parse("custom:0,1,3").unwrap().n(2).unwrap(), 3);
        assert!(Schedule::parse("1,2").is_err());
        assert!(Schedule::parse("0,2,2").is_err());
        assert_eq!(Schedule::parse(&Schedule::Custom(vec![0, 4]).name()).unwrap(), Schedule::Custom(vec![0, 4]));
    }
}
