//! Truncated singular integrals on grids.
//!
//! `C_r f(x) = Σ_y W_{>r}(x - y) f(y)` where `W_{>r}(o)` is the kernel mass of
//! the offset cell `o` outside radius `r`. For smooth kernels this is the
//! centre value times `h^d` when `|o h| > r`. For rough kernels the cell mass is
//! integrated exactly in polar coordinates, `∫ Ω(θ) log(r_out/r_in) dθ`, which
//! removes the lattice bias of point sampling for even angular profiles.
//! Then `T_{ε,δ} f = C_ε f - C_δ f`.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::dyadic::DyadicCube;
use crate::error::{invalid, Error, Result};
use crate::fft::PaddedConv;
use crate::grid::{Grid, GridFunction};
use crate::operators::kernel::{KernelSpec, RadiiSet, RoughKernel};
use crate::special::GaussRule;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Radial interval `[r_in, r_out]` of the ray with direction `u` inside the box.
fn ray_interval(u: [f64; 2], lo: [f64; 2], hi: [f64; 2]) -> Option<(f64, f64)> {
    let (mut a, mut b) = (0.0f64, f64::INFINITY);
    for i in 0..2 {
        if u[i].abs() < 1e-300 {
            if lo[i] > 0.0 || hi[i] < 0.0 {
                return None;
            }
        } else {
            let (t0, t1) = (lo[i] / u[i], hi[i] / u[i]);
            a = a.max(t0.min(t1));
            b = b.min(t0.max(t1));
        }
    }
    (b > a).then_some((a, b))
}

fn wrap(t: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    (t + std::f64::consts::PI).rem_euclid(tau) - std::f64::consts::PI
}

/// Mass of `Ω(x/|x|)/|x|^2` over the part of a square cell with `|x| > rho`.
///
/// The cell is `centre ± half` and must not contain the origin.
pub(crate) fn polar_cell_mass(k: &RoughKernel, centre: [f64; 2], half: f64, rho: f64, rule: &GaussRule) -> Complex64 {
    let lo = [centre[0] - half, centre[1] - half];
    let hi = [centre[0] + half, centre[1] + half];
    let nearest = lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| if *a > 0.0 { *a } else if *b < 0.0 { -*b } else { 0.0 })
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    let far_corner = [lo[0].abs().max(hi[0].abs()), lo[1].abs().max(hi[1].abs())];
    let rmax = (far_corner[0].powi(2) + far_corner[1].powi(2)).sqrt();
    if rmax <= rho {
        return ZERO;
    }
    let phi_c = centre[1].atan2(centre[0]);
    let corners = [[lo[0], lo[1]], [hi[0], lo[1]], [lo[0], hi[1]], [hi[0], hi[1]]];
    let mut cuts: Vec<f64> = corners.iter().map(|c| wrap(c[1].atan2(c[0]) - phi_c)).collect();
    if rho > nearest {
        // circle meets the cell edges
        for i in 0..2 {
            let j = 1 - i;
            for &edge in &[lo[i], hi[i]] {
                let s2 = rho * rho - edge * edge;
                if s2 < 0.0 {
                    continue;
                }
                let s = s2.sqrt();
                for other in [s, -s] {
                    if other >= lo[j] && other <= hi[j] {
                        let mut p = [0.0; 2];
                        p[i] = edge;
                        p[j] = other;
                        cuts.push(wrap(p[1].atan2(p[0]) - phi_c));
                    }
                }
            }
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let mut total = ZERO;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a < 1e-15 {
            continue;
        }
        total += rule.integrate(a, b, |t| {
            let th = phi_c + t;
            let u = [th.cos(), th.sin()];
            match ray_interval(u, lo, hi) {
                Some((r_in, r_out)) => {
                    let r_in = r_in.max(rho);
                    if r_out > r_in {
                        (k.omega)(&u) * (r_out / r_in).ln()
                    } else {
                        ZERO
                    }
                }
                None => ZERO,
            }
        });
    }
    total
}

/// Kernel mass of offset cell `o` outside radius `rho`, already multiplied into
/// the discrete sum (so the convolution weight is this value itself).
fn cell_weight(kernel: &KernelSpec, grid: &Grid, o: [i64; 2], rho: f64, rule: &GaussRule) -> Complex64 {
    let h = grid.h();
    let x: Vec<f64> = (0..grid.d).map(|a| o[a] as f64 * h).collect();
    if o[..grid.d].iter().all(|&v| v == 0) {
        return ZERO;
    }
    match kernel {
        KernelSpec::Smooth(_) => {
            let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if r > rho {
                kernel.eval(&x) * grid.cell_volume()
            } else {
                ZERO
            }
        }
        KernelSpec::Rough(k) if k.d == 1 => {
            let (a, b) = ((x[0].abs() - 0.5 * h), (x[0].abs() + 0.5 * h));
            let a = a.max(rho);
            if b <= a {
                ZERO
            } else {
                (k.omega)(&[x[0].signum()]) * (b / a).ln()
            }
        }
        KernelSpec::Rough(k) => polar_cell_mass(k, [x[0], x[1]], 0.5 * h, rho, rule),
    }
}

/// Cumulative truncations `C_{r_i} f` for every ladder radius.
pub struct TruncationTable {
    pub grid: Grid,
    pub radii: Vec<f64>,
    /// `cum[i][x] = T_{r_i, ∞} f(x)`.
    pub cum: Vec<Vec<Complex64>>,
}

/// Precomputed kernel spectra for a fixed kernel, grid and radius list.
pub struct TruncationPlan {
    pub grid: Grid,
    pub radii: Vec<f64>,
    conv: PaddedConv,
    spectra: Vec<Vec<Complex64>>,
}

impl TruncationPlan {
    pub fn new(kernel: &KernelSpec, grid: Grid, radii: &[f64]) -> Result<Self> {
        if kernel.d() != grid.d {
            return invalid("kernel and grid dimensions differ");
        }
        if let Some(&r0) = radii.first() {
            if r0 < grid.cell_diagonal() * (1.0 - 1e-12) {
                return Err(Error::InvalidResolution(format!(
                    "truncation radius {r0} below the cell diagonal {}",
                    grid.cell_diagonal()
                )));
            }
        }
        let conv = PaddedConv::new(grid);
        let offsets = conv.offsets();
        let rule = GaussRule::new(8);
        let h = grid.h();
        let full: Vec<Complex64> = offsets
            .par_iter()
            .map(|o| o.map_or(ZERO, |o| cell_weight(kernel, &grid, o, 0.0, &rule)))
            .collect();
        let spectra = radii
            .par_iter()
            .map(|&rho| {
                let table: Vec<Complex64> = offsets
                    .iter()
                    .zip(&full)
                    .map(|(o, w)| match o {
                        None => ZERO,
                        Some(o) => {
                            let c: Vec<f64> = (0..grid.d).map(|a| o[a] as f64 * h).collect();
                            let r = c.iter().map(|v| v * v).sum::<f64>().sqrt();
                            // cells clear of the circle keep their full mass or vanish
                            let reach = 0.5 * h * (grid.d as f64).sqrt();
                            if kernel.is_rough() && r - reach > rho {
                                *w
                            } else if kernel.is_rough() && r + reach <= rho {
                                ZERO
                            } else {
                                cell_weight(kernel, &grid, *o, rho, &rule)
                            }
                        }
                    })
                    .collect();
                conv.kernel_spectrum_from_table(table)
            })
            .collect();
        Ok(TruncationPlan {
            grid,
            radii: radii.to_vec(),
            conv,
            spectra,
        })
    }

    pub fn apply(&self, f: &GridFunction) -> TruncationTable {
        assert_eq!(f.grid, self.grid);
        let data = self.conv.data_spectrum(&f.values);
        let cum = self
            .spectra
            .par_iter()
            .map(|s| self.conv.convolve(&data, s))
            .collect();
        TruncationTable {
            grid: self.grid,
            radii: self.radii.clone(),
            cum,
        }
    }
}

impl TruncationTable {
    pub fn build(kernel: &KernelSpec, f: &GridFunction, radii: &RadiiSet) -> Result<Self> {
        radii.check_resolution(&f.grid)?;
        Ok(TruncationPlan::new(kernel, f.grid, radii.radii())?.apply(f))
    }

    /// `T_{r_i, r_j} f` for ladder indices `i < j`.
    pub fn between(&self, i: usize, j: usize) -> Vec<Complex64> {
        self.cum[i].iter().zip(&self.cum[j]).map(|(a, b)| a - b).collect()
    }

    /// `sup_i |T_{r_i, ∞} f|` pointwise.
    pub fn maximal(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|x| self.cum.iter().map(|c| c[x].norm()).fold(0.0, f64::max))
            .collect()
    }

    /// Running table `M(x, J) = max_{i<j≤J} |C_i(x) - C_j(x)|`, `J` indexed from 0.
    pub fn pair_prefix_max(&self) -> Vec<Vec<f64>> {
        let n = self.radii.len();
        (0..self.grid.len())
            .into_par_iter()
            .map(|x| {
                let mut out = vec![0.0; n];
                let mut best = 0.0f64;
                for j in 1..n {
                    for i in 0..j {
                        best = best.max((self.cum[i][x] - self.cum[j][x]).norm());
                    }
                    out[j] = best;
                }
                out
            })
            .collect()
    }

    /// `T_{♯,P} f`: sup over ladder pairs with `δ ≤ dist(x, ∂P)/2`; zero off `P`.
    pub fn localized_maximal(&self, cube: &DyadicCube) -> Vec<f64> {
        let prefix = self.pair_prefix_max();
        self.localized_from_prefix(&prefix, cube)
    }

    pub fn localized_from_prefix(&self, prefix: &[Vec<f64>], cube: &DyadicCube) -> Vec<f64> {
        let dist = self.grid.boundary_distance(cube);
        let mut out = vec![0.0; self.grid.len()];
        for x in self.grid.cells_in_cube(cube) {
            if let Some(j) = last_at_most(&self.radii, 0.5 * dist[x]) {
                out[x] = prefix[x][j];
            }
        }
        out
    }
}

/// Largest index with `radii[j] ≤ t`.
pub(crate) fn last_at_most(radii: &[f64], t: f64) -> Option<usize> {
    let k = radii.partition_point(|&r| r <= t);
    k.checked_sub(1)
}

/// `T_{ε,δ} f` for a single pair.
pub fn truncated_apply(kernel: &KernelSpec, f: &GridFunction, eps: f64, delta: f64) -> Result<GridFunction> {
    if !(eps > 0.0 && eps < delta) {
        return invalid("need 0 < eps < delta");
    }
    let plan = TruncationPlan::new(kernel, f.grid, &[eps, delta])?;
    let t = plan.apply(f);
    GridFunction::from_values(f.grid, t.between(0, 1))
}

/// `T_♯ f = sup_{ε ∈ ladder} |T_{ε, R_max} f|` with `R_max` the domain diameter.
pub fn maximal_truncation(kernel: &KernelSpec, f: &GridFunction, radii: &RadiiSet) -> Result<Vec<f64>> {
    Ok(TruncationTable::build(kernel, f, radii)?.maximal())
}

pub fn localized_maximal_truncation(
    kernel: &KernelSpec,
    f: &GridFunction,
    cube: &DyadicCube,
    radii: &RadiiSet,
) -> Result<Vec<f64>> {
    Ok(TruncationTable::build(kernel, f, radii)?.localized_maximal(cube))
}

/// Principal-value style operator `T_{ε_min, ∞}` as a reusable linear map.
pub struct TruncatedOperator {
    plan: TruncationPlan,
    adjoint: TruncationPlan,
}

impl TruncatedOperator {
    pub fn new(kernel: &KernelSpec, grid: Grid, eps: f64) -> Result<Self> {
        let plan = TruncationPlan::new(kernel, grid, &[eps])?;
        let adjoint = TruncationPlan::new(&adjoint_kernel(kernel), grid, &[eps])?;
        Ok(TruncatedOperator { plan, adjoint })
    }

    pub fn apply(&self, values: &[Complex64]) -> Vec<Complex64> {
        let data = self.plan.conv.data_spectrum(values);
        self.plan.conv.convolve(&data, &self.plan.spectra[0])
    }

    pub fn apply_adjoint(&self, values: &[Complex64]) -> Vec<Complex64> {
        let data = self.adjoint.conv.data_spectrum(values);
        self.adjoint.conv.convolve(&data, &self.adjoint.spectra[0])
    }

    pub fn grid(&self) -> Grid {
        self.plan.grid
    }
}

/// Kernel of the adjoint convolution, `conj(K(-x))`.
pub fn adjoint_kernel(kernel: &KernelSpec) -> KernelSpec {
    use std::sync::Arc;
    match kernel {
        KernelSpec::Rough(k) => {
            let om = k.omega.clone();
            let mut r = k.clone();
            r.omega = Arc::new(move |u: &[f64]| {
                let v: Vec<f64> = u.iter().map(|x| -x).collect();
                om(&v).conj()
            });
            r.name = format!("{}*", k.name);
            r.modes = k
                .modes
                .iter()
                .map(|&(n, c)| {
                    // Ω(-u) picks up (-1)^n, conjugation flips the mode index
                    let s = if n % 2 == 0 { 1.0 } else { -1.0 };
                    (-n, c.conj() * s)
                })
                .collect();
            KernelSpec::Rough(r)
        }
        KernelSpec::Smooth(k) => {
            let kf = k.kernel.clone();
            let mut s = k.clone();
            s.kernel = Arc::new(move |x: &[f64]| {
                let v: Vec<f64> = x.iter().map(|t| -t).collect();
                kf(&v).conj()
            });
            s.name = format!("{}*", k.name);
            KernelSpec::Smooth(s)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::kernel::SmoothDiniParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_fn(grid: Grid, seed: u64) -> GridFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        GridFunction::from_real(grid, &v).unwrap()
    }

    #[test]
    fn polar_mass_matches_fine_midpoint_rule() {
        let k = match KernelSpec::beurling(2).unwrap() {
            KernelSpec::Rough(k) => k,
            _ => unreachable!(),
        };
        let rule = GaussRule::new(8);
        for &(c, rho) in &[([0.1, 0.0], 0.0), ([0.1, 0.1], 0.12), ([-0.3, 0.1], 0.3), ([0.0, -0.2], 0.21)] {
            let got = polar_cell_mass(&k, c, 0.05, rho, &rule);
            let m = 1200;
            let s = 0.1 / m as f64;
            let mut want = ZERO;
            for i in 0..m {
                for j in 0..m {
                    let x = [c[0] - 0.05 + (i as f64 + 0.5) * s, c[1] - 0.05 + (j as f64 + 0.5) * s];
                    let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
                    if r > rho {
                        want += (k.omega)(&[x[0] / r, x[1] / r]) / (r * r) * s * s;
                    }
                }
            }
            assert!((got - want).norm() < 2e-4 * (1.0 + want.norm()), "{c:?} {rho}: {got} vs {want}");
        }
    }

    #[test]
    fn odd_kernel_closed_form() {
        // f = 1_[0,1/4), T_{1/8,1/2} f(1/2) = -∫_{1/4}^{3/8}... evaluated as ∫ dy/(x - y)
        let k = KernelSpec::odd1d();
        let mut prev = f64::INFINITY;
        for n in [512usize, 2048, 8192] {
            let g = Grid::new(1, n, 4.0).unwrap();
            let f = GridFunction::from_fn(g, |x| Complex64::new(if (0.0..0.25).contains(&x[0]) { 1.0 } else { 0.0 }, 0.0));
            let t = truncated_apply(&k, &f, 0.125, 0.5).unwrap();
            let ix = g.nearest_index(0.5);
            let x = g.coord(ix);
            // oracle: ∫_{y ∈ [0,1/4), 1/8 < x - y < 1/2} dy/(x - y)
            let (a, b) = ((x - 0.5f64).max(0.0), (x - 0.125f64).min(0.25));
            let oracle = if b > a { ((x - a) / (x - b)).ln() } else { 0.0 };
            let err = (t.values[ix].re - oracle).abs();
            assert!(err <= prev + 1e-12);
            prev = err;
            if n == 8192 {
                assert!(err < 1e-3, "{err}");
                assert!((oracle - 2f64.ln()).abs() < 2e-3);
            }
        }
    }

    #[test]
    fn linearity_and_additivity() {
        let g = Grid::new(2, 24, 1.0).unwrap();
        for k in [KernelSpec::beurling(1).unwrap(), KernelSpec::from_name("smooth-dini:d2").unwrap()] {
            let (f, u) = (random_fn(g, 1), random_fn(g, 2));
            let radii = RadiiSet::for_grid(&g);
            let plan = TruncationPlan::new(&k, g, radii.radii()).unwrap();
            let tf = plan.apply(&f);
            let tu = plan.apply(&u);
            let c = Complex64::new(0.7, -0.2);
            let tsum = plan.apply(&f.scale(c).add(&u));
            for x in 0..g.len() {
                let want = tf.cum[3][x] * c + tu.cum[3][x];
                assert!((tsum.cum[3][x] - want).norm() < 1e-12 * (1.0 + want.norm()));
                let (a, b, all) = (tf.between(1, 4)[x], tf.between(4, 7)[x], tf.between(1, 7)[x]);
                assert!((a + b - all).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn odd_symmetry_and_translation() {
        let g = Grid::new(1, 64, 1.0).unwrap();
        let f = random_fn(g, 5);
        for k in [KernelSpec::odd1d(), KernelSpec::smooth_dini(SmoothDiniParams::default()).unwrap()] {
            let t = truncated_apply(&k, &f, 0.05, 0.3).unwrap();
            let tr = truncated_apply(&k, &f.reflect(), 0.05, 0.3).unwrap();
            for x in 0..g.n {
                assert!((tr.values[g.n - 1 - x] + t.values[x]).norm() < 1e-12);
            }
        }
        // translation: compactly supported data shifted inside the domain
        let mut v = vec![0.0; 64];
        v[20..30].copy_from_slice(&[1.0, 2.0, -1.0, 0.5, 0.0, 3.0, 1.0, -2.0, 0.3, 0.7]);
        let f = GridFunction::from_real(g, &v).unwrap();
        let k = KernelSpec::odd1d();
        let t = truncated_apply(&k, &f, 0.05, 0.3).unwrap();
        let ts = truncated_apply(&k, &f.roll([3, 0]), 0.05, 0.3).unwrap();
        for x in 0..61 {
            assert!((ts.values[x + 3] - t.values[x]).norm() < 1e-12);
        }
    }

    #[test]
    fn maximal_truncations_dominate() {
        let g = Grid::new(1, 256, 1.0).unwrap();
        let f = random_fn(g, 9);
        let k = KernelSpec::odd1d();
        let radii = RadiiSet::for_grid(&g);
        let table = TruncationTable::build(&k, &f, &radii).unwrap();
        let sharp = table.maximal();
        for c in &table.cum {
            for x in 0..g.n {
                assert!(sharp[x] >= c[x].norm());
            }
        }
        let fine = maximal_truncation(&k, &f, &radii.refined()).unwrap();
        for x in 0..g.n {
            assert!(fine[x] >= sharp[x] - 1e-12);
        }
        let p = DyadicCube::new(vec![0], 1, vec![0]).unwrap();
        let big = DyadicCube::new(vec![0], 0, vec![-1]).unwrap();
        let loc = table.localized_maximal(&p);
        let loc_big = table.localized_maximal(&big);
        let full = table.pair_prefix_max();
        for x in 0..g.n {
            assert!(loc[x] <= loc_big[x] + 1e-15 || !big.contains(&g.point(x)));
            assert!(loc[x] <= *full[x].last().unwrap());
            if !p.contains(&g.point(x)) {
                assert_eq!(loc[x], 0.0);
            }
        }
    }

    #[test]
    fn adjoint_consistency() {
        let g = Grid::new(2, 16, 1.0).unwrap();
        for k in [KernelSpec::beurling(3).unwrap(), KernelSpec::from_name("smooth-dini:d2").unwrap()] {
            let op = TruncatedOperator::new(&k, g, g.cell_diagonal()).unwrap();
            let (f, u) = (random_fn(g, 3), random_fn(g, 4).scale(Complex64::new(0.3, 1.0)));
            let lhs: Complex64 = op.apply(&f.values).iter().zip(&u.values).map(|(a, b)| a * b.conj()).sum();
            let rhs: Complex64 = f.values.iter().zip(op.apply_adjoint(&u.values)).map(|(a, b)| a * b.conj()).sum();
            assert!((lhs - rhs).norm() < 1e-8 * (1.0 + lhs.norm()));
        }
    }

    #[test]
    fn below_resolution_rejected() {
        let g = Grid::new(1, 16, 1.0).unwrap();
        let f = random_fn(g, 1);
        assert!(matches!(
            truncated_apply(&KernelSpec::odd1d(), &f, 0.01, 0.5),
            Err(Error::InvalidResolution(_))
        ));
        assert!(truncated_apply(&KernelSpec::odd1d(), &f, 0.5, 0.1).is_err());
    }
}
