//! Weights and their Muckenhoupt-type characteristics.
//!
//! Suprema run over a [`CubeFamily`], by default every dyadic cube of every
//! shifted grid that lies in the domain and is at least one cell wide. Cube
//! averages use the cells whose midpoints lie in the cube.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::ops::Range;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{all_shifts, cmp_side, cubes_meeting, AxisBox, DyadicCube};
use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::operators::maximal::MaximalPlan;
use crate::special::GaussRule;

/// Cubes over which characteristics are maximised, with their cell ranges.
#[derive(Clone, Debug)]
pub struct CubeFamily {
    pub grid: Grid,
    cubes: Vec<DyadicCube>,
    ranges: Vec<[Range<usize>; 2]>,
    descriptor: String,
}

impl CubeFamily {
    /// All cubes of all `3^d` shifted grids inside the domain, down to one cell.
    pub fn dyadic(grid: Grid) -> Result<Self> {
        let coarse = (-grid.side.log2()).ceil() as i32;
        let fine = (-grid.h().log2()).floor() as i32;
        let half = 0.5 * grid.side;
        let bx = AxisBox::new(vec![-half; grid.d], vec![half; grid.d])?;
        let mut cubes = Vec::new();
        for level in coarse..=fine {
            for alpha in all_shifts(grid.d) {
                cubes.extend(
                    cubes_meeting(&bx, &alpha, level)
                        .into_iter()
                        .filter(|q| grid.domain_contains_cube(q)),
                );
            }
        }
        let mut fam = Self::from_cubes(grid, cubes)?;
        fam.descriptor = format!("dyadic:{}:{}:{}", grid.d, grid.n, grid.side);
        Ok(fam)
    }

    pub fn from_cubes(grid: Grid, cubes: Vec<DyadicCube>) -> Result<Self> {
        if cubes.is_empty() {
            return invalid("cube family is empty");
        }
        let h = grid.h();
        let ranges = cubes
            .par_iter()
            .map(|q| {
                if q.dim() != grid.d {
                    return invalid("cube dimension differs from the grid");
                }
                if cmp_side(q, h).is_lt() {
                    return Err(Error::InvalidResolution(format!(
                        "cube side {} is below the cell width {h}",
                        q.side()
                    )));
                }
                if !grid.domain_contains_cube(q) {
                    return invalid("cube leaves the grid domain");
                }
                let r = grid.cube_ranges(q);
                Ok([r[0].clone(), if grid.d == 2 { r[1].clone() } else { 0..1 }])
            })
            .collect::<Result<Vec<_>>>()?;
        let mut hasher = DefaultHasher::new();
        cubes.hash(&mut hasher);
        let descriptor = format!("custom:{}:{:x}", cubes.len(), hasher.finish());
        Ok(CubeFamily {
            grid,
            cubes,
            ranges,
            descriptor,
        })
    }

    pub fn cubes(&self) -> &[DyadicCube] {
        &self.cubes
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    fn cells(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        let [rx, ry] = &self.ranges[i];
        let n = self.grid.n;
        ry.clone().flat_map(move |j| rx.clone().map(move |k| k + n * j))
    }

    fn count(&self, i: usize) -> usize {
        self.ranges[i][0].len() * self.ranges[i][1].len()
    }

    fn average(&self, values: &[f64], i: usize) -> f64 {
        self.cells(i).map(|c| values[c]).sum::<f64>() / self.count(i) as f64
    }

    /// `max_Q F(avg_Q a, avg_Q b)` in parallel.
    fn sup2(&self, a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64 + Sync) -> f64 {
        (0..self.len())
            .into_par_iter()
            .map(|i| f(self.average(a, i), self.average(b, i)))
            .reduce(|| f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
struct CacheKey {
    kind: &'static str,
    p: u64,
    family: String,
}

/// Strictly positive, finite samples on a grid.
#[derive(Debug)]
pub struct Weight {
    pub grid: Grid,
    values: Vec<f64>,
    cache: Mutex<HashMap<CacheKey, f64>>,
}

impl Clone for Weight {
    fn clone(&self) -> Self {
        Weight {
            grid: self.grid,
            values: self.values.clone(),
            cache: Mutex::new(self.cache.lock().unwrap().clone()),
        }
    }
}

impl Weight {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return invalid(format!("expected {} samples, got {}", grid.len(), values.len()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return invalid(format!("weight samples must be positive and finite, found {v}"));
        }
        Ok(Weight {
            grid,
            values,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn from_grid_function(f: &GridFunction) -> Result<Self> {
        if f.values.iter().any(|v| v.im != 0.0) {
            return invalid("weight samples must be real");
        }
        Self::new(f.grid, f.re())
    }

    pub fn to_grid_function(&self) -> GridFunction {
        GridFunction::from_real(self.grid, &self.values).expect("lengths agree")
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `w^e`
    pub fn pow(&self, e: f64) -> Result<Weight> {
        Weight::new(self.grid, self.values.iter().map(|v| v.powf(e)).collect())
    }

    pub fn scaled(&self, c: f64) -> Result<Weight> {
        Weight::new(self.grid, self.values.iter().map(|v| v * c).collect())
    }

    /// Dual weight `w^{1-p'}`.
    pub fn dual(&self, p: f64) -> Result<Weight> {
        self.pow(1.0 - conjugate(p))
    }

    fn cached(&self, kind: &'static str, p: f64, fam: &CubeFamily, f: impl FnOnce() -> Result<f64>) -> Result<f64> {
        let key = CacheKey {
            kind,
            p: p.to_bits(),
            family: fam.descriptor.clone(),
        };
        if let Some(v) = self.cache.lock().unwrap().get(&key) {
            return Ok(*v);
        }
        let v = f()?;
        self.cache.lock().unwrap().entry(key).or_insert(v);
        Ok(v)
    }
}

pub fn conjugate(p: f64) -> f64 {
    p / (p - 1.0)
}

fn check_family(w: &Weight, fam: &CubeFamily) -> Result<()> {
    if w.grid != fam.grid {
        return invalid("weight and cube family live on different grids");
    }
    Ok(())
}

/// `[w]_{A_p} = sup_Q (avg w)(avg w^{1-p'})^{p-1}`.
pub fn ap_constant(w: &Weight, p: f64, fam: &CubeFamily) -> Result<f64> {
    if !(p > 1.0 && p.is_finite()) {
        return invalid("A_p needs 1 < p < ∞");
    }
    check_family(w, fam)?;
    w.cached("ap", p, fam, || {
        let sigma = w.dual(p)?;
        Ok(fam.sup2(&w.values, &sigma.values, |a, s| a * s.powf(p - 1.0)))
    })
}

/// Fujii–Wilson constant `sup_Q w(Q)^{-1} ∫_Q M(1_Q w)`.
pub fn ainf_fujii_wilson(w: &Weight, fam: &CubeFamily) -> Result<f64> {
    check_family(w, fam)?;
    w.cached("ainf", 0.0, fam, || {
        let g = w.grid;
        let side_cells = |i: usize| fam.ranges[i][0].len().max(fam.ranges[i][1].len());
        let mut by_size: HashMap<usize, Vec<usize>> = HashMap::new();
        for i in 0..fam.len() {
            by_size.entry(side_cells(i)).or_default().push(i);
        }
        let mut best = f64::NEG_INFINITY;
        for (m, members) in by_size {
            if m == 1 {
                best = best.max(1.0);
                continue;
            }
            // 1_Q w embedded in an m-cell square, zero elsewhere
            let local = Grid::new(g.d, m, m as f64 * g.h())?;
            let plan = MaximalPlan::for_grid(local);
            let worst = members
                .par_iter()
                .map(|&i| {
                    let [rx, ry] = &fam.ranges[i];
                    let mut data = vec![0.0; local.len()];
                    let mut mass = 0.0;
                    for (b, j) in ry.clone().enumerate() {
                        for (a, k) in rx.clone().enumerate() {
                            let v = w.values[k + g.n * j];
                            data[a + m * b] = v;
                            mass += v;
                        }
                    }
                    let mw = plan.uncentred(&data);
                    let mut total = 0.0;
                    for b in 0..ry.len() {
                        for a in 0..rx.len() {
                            total += mw[a + m * b];
                        }
                    }
                    total / mass
                })
                .reduce(|| f64::NEG_INFINITY, f64::max);
            best = best.max(worst);
        }
        Ok(best)
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightCharacteristics {
    pub p: f64,
    pub ap: f64,
    pub ainf: f64,
    pub dual_ainf: f64,
    pub braces: f64,
    pub parens: f64,
}

impl WeightCharacteristics {
    pub fn assemble(p: f64, ap: f64, ainf: f64, dual_ainf: f64) -> Self {
        let pp = conjugate(p);
        WeightCharacteristics {
            p,
            ap,
            ainf,
            dual_ainf,
            braces: ap.powf(1.0 / p) * ainf.powf(1.0 / pp).max(dual_ainf.powf(1.0 / p)),
            parens: ainf.max(dual_ainf),
        }
    }

    /// `(w)/{w}` and `{w}/[w]^{max(1, 1/(p-1))}`, the two links of the chain.
    pub fn chain_ratios(&self) -> (f64, f64) {
        let e = 1f64.max(1.0 / (self.p - 1.0));
        (self.parens / self.braces, self.braces / self.ap.powf(e))
    }
}

pub fn characteristics(w: &Weight, p: f64, fam: &CubeFamily) -> Result<WeightCharacteristics> {
    let ap = ap_constant(w, p, fam)?;
    let ainf = ainf_fujii_wilson(w, fam)?;
    let dual_ainf = ainf_fujii_wilson(&w.dual(p)?, fam)?;
    Ok(WeightCharacteristics::assemble(p, ap, ainf, dual_ainf))
}

/// Mean of `|x|^δ` over the axis-parallel box `[lo, hi]`, which may contain the origin.
fn box_power_mean(lo: &[f64], hi: &[f64], delta: f64, rule: &GaussRule) -> f64 {
    if lo.len() == 1 {
        let (a, b) = (lo[0], hi[0]);
        let prim = |x: f64| x.signum() * x.abs().powf(1.0 + delta) / (1.0 + delta);
        return (prim(b) - prim(a)) / (b - a);
    }
    // split into triangles from the origin to each edge; radial part exact
    let corners = [[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]];
    let mut total = 0.0;
    for e in 0..4 {
        let (p, q) = (corners[e], corners[(e + 1) % 4]);
        let (tx, ty) = (q[0] - p[0], q[1] - p[1]);
        let len = tx.hypot(ty);
        // distance from the origin to the edge line, with its normal angle
        let dist = (p[0] * ty - p[1] * tx).abs() / len;
        if dist == 0.0 {
            continue;
        }
        let (t0, mut t1) = (p[1].atan2(p[0]), q[1].atan2(q[0]));
        if t1 < t0 {
            t1 += 2.0 * std::f64::consts::PI;
        }
        let nx = ty / len;
        let ny = -tx / len;
        let phi = ny.atan2(nx);
        let phi = if (p[0] * nx + p[1] * ny) < 0.0 { phi + std::f64::consts::PI } else { phi };
        let tm = 0.5 * (t0 + t1);
        let radial = |t: f64| (dist / (t - phi).cos()).powf(delta + 2.0) / (delta + 2.0);
        total += rule.integrate(t0, tm, radial) + rule.integrate(tm, t1, radial);
    }
    total / ((hi[0] - lo[0]) * (hi[1] - lo[1]))
}

/// `|x|^δ` at cell midpoints; cells touching the origin hold the exact cell mean.
pub fn power_weight(delta: f64, grid: Grid) -> Result<Weight> {
    if !(delta.abs() < grid.d as f64) {
        return invalid(format!("power weight needs |delta| < {}", grid.d));
    }
    if delta == 0.0 {
        return Weight::new(grid, vec![1.0; grid.len()]);
    }
    let h = grid.h();
    let rule = GaussRule::new(16);
    let values = (0..grid.len())
        .map(|k| {
            let x = grid.point(k);
            if x.iter().all(|c| c.abs() <= 0.5 * h) {
                let lo: Vec<f64> = x.iter().map(|c| c - 0.5 * h).collect();
                let hi: Vec<f64> = x.iter().map(|c| c + 0.5 * h).collect();
                box_power_mean(&lo, &hi, delta, &rule)
            } else {
                x.iter().map(|c| c * c).sum::<f64>().sqrt().powf(delta)
            }
        })
        .collect();
    Weight::new(grid, values)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ReverseHolderReport {
    pub holds: bool,
    pub worst_ratio: f64,
}

/// `max_Q avg(w^{1+δ}) / (avg w)^{1+δ}` against the factor 2.
pub fn reverse_holder_check(w: &Weight, delta: f64, fam: &CubeFamily) -> Result<ReverseHolderReport> {
    if !(delta > 0.0) {
        return invalid("reverse Hölder exponent must be positive");
    }
    check_family(w, fam)?;
    let wd: Vec<f64> = w.values.iter().map(|v| v.powf(1.0 + delta)).collect();
    let worst_ratio = fam.sup2(&wd, &w.values, |a, b| a / b.powf(1.0 + delta));
    Ok(ReverseHolderReport {
        holds: worst_ratio <= 2.0,
        worst_ratio,
    })
}

/// Largest `c` (to relative precision `tol`) with the factor-2 reverse Hölder
/// inequality at `δ = c / [w]_{A_∞}`. Capped at `c_max`.
pub fn reverse_holder_bisect(w: &Weight, ainf: f64, fam: &CubeFamily, c_max: f64, tol: f64) -> Result<f64> {
    let holds = |c: f64| reverse_holder_check(w, c / ainf, fam).map(|r| r.holds);
    let mut lo = 0.0;
    let mut hi = c_max.min(1.0);
    while holds(hi)? {
        lo = hi;
        if hi >= c_max {
            return Ok(c_max);
        }
        hi = (2.0 * hi).min(c_max);
    }
    while hi - lo > tol * hi {
        let mid = 0.5 * (lo + hi);
        if holds(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Reverse Hölder constant `K = max_Q (avg w^r)^{1/r} / avg w`.
pub fn reverse_holder_constant(w: &Weight, r: f64, fam: &CubeFamily) -> Result<f64> {
    if !(r > 1.0) {
        return invalid("reverse Hölder exponent r must exceed 1");
    }
    check_family(w, fam)?;
    let wr: Vec<f64> = w.values.iter().map(|v| v.powf(r)).collect();
    Ok(fam.sup2(&wr, &w.values, |a, b| a.powf(1.0 / r) / b))
}

/// `K r'`, the A_∞ bound from a reverse Hölder inequality with constant `K` and exponent `r`.
pub fn rhi_to_ainf_bound(k: f64, r: f64) -> Result<f64> {
    if !(k >= 1.0 && r > 1.0) {
        return invalid("need K ≥ 1 and r > 1");
    }
    Ok(k * conjugate(r))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BumpReport {
    pub p: f64,
    pub delta: f64,
    /// `[w^{1+δ}]_{A_p} / [w]_{A_p}^{1+δ}`, at most 4.
    pub ap_ratio: f64,
    /// `[w^{1+δ/2}]_{A_∞} / [w]_{A_∞}^{1+δ/2}`
    pub ainf_ratio: f64,
    /// `{w^{1+δ/2}}_{A_p} / {w}_{A_p}^{1+δ/2}`
    pub braces_ratio: f64,
    pub ap_holds: bool,
}

/// Bumped-weight ratios for `δ ≤ cap / (w)_{A_p}`.
pub fn bump_corollaries_check(w: &Weight, p: f64, delta: f64, fam: &CubeFamily, cap: f64) -> Result<BumpReport> {
    let base = characteristics(w, p, fam)?;
    if !(delta > 0.0 && delta <= cap / base.parens * (1.0 + 1e-12)) {
        return invalid(format!("bump exponent {delta} exceeds the admissible {}", cap / base.parens));
    }
    let bumped = w.pow(1.0 + delta)?;
    let ap_ratio = ap_constant(&bumped, p, fam)? / base.ap.powf(1.0 + delta);
    let half = characteristics(&w.pow(1.0 + 0.5 * delta)?, p, fam)?;
    Ok(BumpReport {
        p,
        delta,
        ap_ratio,
        ainf_ratio: half.ainf / base.ainf.powf(1.0 + 0.5 * delta),
        braces_ratio: half.braces / base.braces.powf(1.0 + 0.5 * delta),
        ap_holds: ap_ratio <= 4.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// A_2 supremum over every interval of grid cells.
    fn brute_a2(w: &Weight) -> f64 {
        let v = w.values();
        let n = v.len();
        let mut pw = vec![0.0; n + 1];
        let mut ps = vec![0.0; n + 1];
        for i in 0..n {
            pw[i + 1] = pw[i] + v[i];
            ps[i + 1] = ps[i] + 1.0 / v[i];
        }
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut best = 0.0f64;
                for j in i + 1..=n {
                    let len = (j - i) as f64;
                    best = best.max((pw[j] - pw[i]) * (ps[j] - ps[i]) / (len * len));
                }
                best
            })
            .reduce(|| 0.0, f64::max)
    }

    #[test]
    fn identity_weight_is_trivial() {
        for (d, n) in [(1, 64), (2, 16)] {
            let g = Grid::new(d, n, 2.0).unwrap();
            let fam = CubeFamily::dyadic(g).unwrap();
            let w = power_weight(0.0, g).unwrap();
            assert!(w.values().iter().all(|v| *v == 1.0));
            let c = characteristics(&w, 2.0, &fam).unwrap();
            for v in [c.ap, c.ainf, c.dual_ainf, c.braces, c.parens] {
                assert!((v - 1.0).abs() < 1e-12, "{c:?}");
            }
            let rh = reverse_holder_check(&w, 0.7, &fam).unwrap();
            assert!(rh.holds && (rh.worst_ratio - 1.0).abs() < 1e-12);
            let b = bump_corollaries_check(&w, 2.0, 0.1, &fam, 0.5).unwrap();
            assert!(b.ap_ratio <= 1.0 + 1e-12 && b.ainf_ratio <= 1.0 + 1e-12 && b.braces_ratio <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let g = Grid::new(1, 16, 2.0).unwrap();
        assert!(Weight::new(g, vec![0.0; 16]).is_err());
        assert!(Weight::new(g, vec![1.0; 15]).is_err());
        assert!(power_weight(1.0, g).is_err());
        let small = DyadicCube::new(vec![0], 5, vec![0]).unwrap();
        assert!(matches!(
            CubeFamily::from_cubes(g, vec![small]),
            Err(Error::InvalidResolution(_))
        ));
        let outside = DyadicCube::new(vec![0], 0, vec![1]).unwrap();
        assert!(CubeFamily::from_cubes(g, vec![outside]).is_err());
        assert!(rhi_to_ainf_bound(0.5, 2.0).is_err());
    }

    #[test]
    fn rhi_bound_values() {
        assert_eq!(rhi_to_ainf_bound(1.0, 2.0).unwrap(), 2.0);
        assert!((rhi_to_ainf_bound(2.0, 1.5).unwrap() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn origin_cell_means() {
        let rule = GaussRule::new(16);
        // ∫_0^1 x^{1/2} = 2/3
        assert!((box_power_mean(&[0.0], &[1.0], 0.5, &rule) - 2.0 / 3.0).abs() < 1e-14);
        // mean of |x|^2 over [-1,1]^2 is 2/3; over [0,1]^2 also 2/3
        assert!((box_power_mean(&[-1.0, -1.0], &[1.0, 1.0], 2.0, &rule) - 2.0 / 3.0).abs() < 1e-13);
        assert!((box_power_mean(&[0.0, 0.0], &[1.0, 1.0], 2.0, &rule) - 2.0 / 3.0).abs() < 1e-13);
        // singular corner against a fine midpoint sum away from the corner
        let m = 2000;
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                let (x, y) = ((i as f64 + 0.5) / m as f64, (j as f64 + 0.5) / m as f64);
                s += (x * x + y * y).sqrt().powf(-0.8);
            }
        }
        let fine = s / (m * m) as f64;
        let exact = box_power_mean(&[0.0, 0.0], &[1.0, 1.0], -0.8, &rule);
        assert!((fine - exact).abs() < 1e-2 * exact, "{fine} {exact}");
    }

    /// Continuum A_2 product of `|x|^δ` on `[-a, 1]`.
    fn straddle_product(delta: f64, a: f64) -> f64 {
        let m = |e: f64| (a.powf(1.0 + e) + 1.0) / ((1.0 + e) * (1.0 + a));
        m(delta) * m(-delta)
    }

    #[test]
    fn a2_half_power_against_interval_oracle() {
        let g = Grid::new(1, 1 << 12, 2.0).unwrap();
        let fam = CubeFamily::dyadic(g).unwrap();
        let w = power_weight(0.5, g).unwrap();
        let dy = ap_constant(&w, 2.0, &fam).unwrap();
        let oracle = brute_a2(&w);
        // shifted dyadic intervals around the origin have a ∈ {0, 1/2, 2}
        let dyadic_limit = straddle_product(0.5, 0.0).max(straddle_product(0.5, 0.5));
        assert!((straddle_product(0.5, 0.0) - 4.0 / 3.0).abs() < 1e-12);
        let all_limit = (1..=1000).map(|k| straddle_product(0.5, k as f64 / 1000.0)).fold(0.0, f64::max);
        assert!((dy - dyadic_limit).abs() < 0.02 * dyadic_limit, "{dy} {dyadic_limit}");
        assert!((oracle - all_limit).abs() < 0.02 * all_limit, "{oracle} {all_limit}");
        assert!(dy <= oracle);
        let w3 = power_weight(0.75, g).unwrap();
        assert!(ap_constant(&w3, 2.0, &fam).unwrap() > dy);
        assert!(brute_a2(&w3) > oracle);
    }

    #[test]
    fn ainf_half_power_envelope() {
        let g = Grid::new(1, 256, 2.0).unwrap();
        let fam = CubeFamily::dyadic(g).unwrap();
        let w = power_weight(0.5, g).unwrap();
        let ap = ap_constant(&w, 2.0, &fam).unwrap();
        let ai = ainf_fujii_wilson(&w, &fam).unwrap();
        assert!(ai >= 1.0 && ai <= 4.0 * ap, "{ai} {ap}");
        let c = characteristics(&w, 2.0, &fam).unwrap();
        // at p = 2 the dual of |x|^δ is |x|^{-δ}
        assert!((c.braces - ap.sqrt() * c.ainf.sqrt().max(c.dual_ainf.sqrt())).abs() < 1e-12);
        let (r1, r2) = c.chain_ratios();
        assert!(r1.is_finite() && r2.is_finite());
    }

    #[test]
    fn reverse_holder_monotone_and_bisection() {
        let g = Grid::new(1, 512, 2.0).unwrap();
        let fam = CubeFamily::dyadic(g).unwrap();
        let w = power_weight(0.5, g).unwrap();
        let mut prev = 0.0;
        for k in 1..20 {
            let r = reverse_holder_check(&w, 0.25 * k as f64, &fam).unwrap();
            assert!(r.worst_ratio >= prev - 1e-12);
            prev = r.worst_ratio;
        }
        let ai = ainf_fujii_wilson(&w, &fam).unwrap();
        let c = reverse_holder_bisect(&w, ai, &fam, 1e3, 1e-6).unwrap();
        assert!(c > 0.0 && c < 1e3);
        assert!(reverse_holder_check(&w, c / ai, &fam).unwrap().holds);
        assert!(!reverse_holder_check(&w, 1.01 * c / ai, &fam).unwrap().holds);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn scaling_duality_refinement(seed in proptest::collection::vec(0.2f64..5.0, 32), c in 0.01f64..100.0, p in 1.2f64..4.0) {
            let g = Grid::new(1, 32, 2.0).unwrap();
            let fam = CubeFamily::dyadic(g).unwrap();
            let w = Weight::new(g, seed).unwrap();
            let a = characteristics(&w, p, &fam).unwrap();
            let b = characteristics(&w.scaled(c).unwrap(), p, &fam).unwrap();
            for (x, y) in [(a.ap, b.ap), (a.ainf, b.ainf), (a.dual_ainf, b.dual_ainf), (a.braces, b.braces)] {
                prop_assert!((x - y).abs() <= 1e-12 * x);
            }
            let pp = conjugate(p);
            let dual = ap_constant(&w.dual(p).unwrap(), pp, &fam).unwrap();
            prop_assert!((dual - a.ap.powf(pp - 1.0)).abs() <= 1e-10 * dual);
            let sub = CubeFamily::from_cubes(g, fam.cubes()[..fam.len() / 2].to_vec()).unwrap();
            prop_assert!(ap_constant(&w, p, &sub).unwrap() <= a.ap);
            prop_assert!(ainf_fujii_wilson(&w, &sub).unwrap() <= a.ainf);
        }
    }
}
