//! Stopping-time construction of sparse collections dominating the maximal
//! truncation of a Dini-continuous Calderón–Zygmund operator.
//!
//! All pointwise quantities live on grid points. Truncations run over a
//! geometric ladder of radii, so `T_{♯,Q} f(x)` is the largest `|T_{ε,δ} f(x)|`
//! over ladder pairs `ε < δ ≤ dist(x, ∂Q)/2`.

use std::collections::{BTreeMap, HashSet};

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dyadic::{cover_ball, cover_ball_within, DyadicCube, LevelWindow};
use crate::error::{invalid, Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::operators::kernel::{KernelSpec, RadiiSet};
use crate::operators::truncation::{TruncationPlan, TruncationTable};
use crate::weights::{characteristics, CubeFamily, Weight};

/// `5·3^{2d}`, the overlap factor in the sparseness count.
pub fn overlap_factor(d: usize) -> f64 {
    5.0 * 9f64.powi(d as i32)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StoppingConfig {
    /// Small-size fraction: `Σ|Q| < eps_d |Q_0|`.
    pub eps_d: f64,
    /// Starting multiplier `c` in `C_T^0 = c (‖T‖ + C_K + ‖ω‖_Dini)`.
    pub c_multiplier: f64,
    /// Measured `‖T‖_{L²→L²}`.
    pub t_norm: f64,
    pub radii: Vec<f64>,
    /// The top cube must span at least this many cells per side.
    pub min_top_cells: f64,
    /// Cubes with fewer cells per side are not subdivided further.
    pub terminal_cells: f64,
    pub max_doublings: u32,
    pub window: LevelWindow,
}

impl StoppingConfig {
    pub fn new(d: usize, radii: &RadiiSet, t_norm: f64) -> Self {
        StoppingConfig {
            eps_d: 1.0 / (4.0 * overlap_factor(d)),
            c_multiplier: 1.0,
            t_norm,
            radii: radii.radii().to_vec(),
            min_top_cells: 256.0,
            terminal_cells: 4.0,
            max_doublings: 40,
            window: LevelWindow::default(),
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if !(self.eps_d > 0.0 && self.eps_d <= 1.0 / (2.0 * overlap_factor(d))) {
            return invalid("eps_d must lie in (0, 1/(2·5·3^{2d})]");
        }
        if !(self.c_multiplier > 0.0 && self.c_multiplier.is_finite()) {
            return invalid("c_multiplier must be positive");
        }
        if !(self.t_norm >= 0.0 && self.t_norm.is_finite()) {
            return invalid("operator norm must be finite and nonnegative");
        }
        RadiiSet::from_radii(self.radii.clone())?;
        Ok(())
    }
}

/// Truncation data of one `f` shared by every stopping call.
pub struct TruncationData {
    pub grid: Grid,
    pub radii: Vec<f64>,
    /// `cum[x][i] = T_{r_i,∞} f(x)`.
    cum: Vec<Vec<Complex64>>,
    /// `prefix[x][J] = max_{i<j≤J} |T_{r_i,r_j} f(x)|`.
    prefix: Vec<Vec<f64>>,
    /// `T_♯ f = sup_i |T_{r_i,∞} f|`.
    pub sharp: Vec<f64>,
    abs_prefix: Vec<f64>,
}

impl TruncationData {
    pub fn new(table: &TruncationTable, f: &GridFunction) -> Self {
        let g = table.grid;
        let abs = f.abs();
        let n = g.n;
        let abs_prefix = if g.d == 1 {
            let mut p = vec![0.0; n + 1];
            for i in 0..n {
                p[i + 1] = p[i] + abs[i];
            }
            p
        } else {
            let mut p = vec![0.0; (n + 1) * (n + 1)];
            for j in 0..n {
                for i in 0..n {
                    p[(j + 1) * (n + 1) + i + 1] =
                        abs[i + n * j] + p[j * (n + 1) + i + 1] + p[(j + 1) * (n + 1) + i] - p[j * (n + 1) + i];
                }
            }
            p
        };
        TruncationData {
            grid: g,
            radii: table.radii.clone(),
            cum: (0..g.len()).map(|x| table.cum.iter().map(|c| c[x]).collect()).collect(),
            prefix: table.pair_prefix_max(),
            sharp: table.maximal(),
            abs_prefix,
        }
    }

    /// `⟨|f|⟩_Q` with `f` read as constant on cells and zero off the grid.
    pub fn average(&self, q: &DyadicCube) -> f64 {
        let g = &self.grid;
        let r = g.cube_ranges(q);
        let sum = if g.d == 1 {
            self.abs_prefix[r[0].end] - self.abs_prefix[r[0].start]
        } else {
            let w = g.n + 1;
            let p = &self.abs_prefix;
            let (a, b, c, e) = (r[0].start, r[0].end, r[1].start, r[1].end);
            if a >= b || c >= e {
                0.0
            } else {
                p[e * w + b] - p[c * w + b] - p[e * w + a] + p[c * w + a]
            }
        };
        sum * g.cell_volume() / q.measure()
    }

    /// Number of ladder radii `r` with `2r ≤ dist(x, ∂Q)`, minus one.
    fn top_index(&self, x: usize, q: &DyadicCube) -> Option<usize> {
        let b = q.bounds();
        let idx = self.grid.unflatten(x);
        let mut dist = f64::INFINITY;
        for a in 0..self.grid.d {
            let c = self.grid.coord(idx[a]);
            dist = dist.min(c - b.lower[a]).min(b.upper[a] - c);
        }
        let k = self.radii.partition_point(|&r| r <= 0.5 * dist);
        k.checked_sub(1)
    }

    /// `T_{♯,Q} f(x)` for a grid point `x` inside `Q`.
    pub fn localized_at(&self, x: usize, q: &DyadicCube) -> f64 {
        self.top_index(x, q).map_or(0.0, |j| self.prefix[x][j])
    }

    pub fn localized(&self, q: &DyadicCube) -> Vec<(usize, f64)> {
        self.grid
            .cells_in_cube(q)
            .into_iter()
            .map(|x| (x, self.localized_at(x, q)))
            .collect()
    }
}

/// Truncation data for `f` on the ladder of `config`.
pub fn truncation_data(plan: &TruncationPlan, f: &GridFunction) -> Result<TruncationData> {
    if plan.grid != f.grid {
        return invalid("plan grid differs from the data grid");
    }
    Ok(TruncationData::new(&plan.apply(f), f))
}

/// Lemma-level diagnostics of one stopping call.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RecursionCheck {
    /// `Σ|Q| / |Q_0|`.
    pub size_fraction: f64,
    pub size_ok: bool,
    /// Pairs `Q' ⊊ Q` inside the collection.
    pub nested_pairs: usize,
    /// Grid points where `T_{♯,Q_0} f > C⟨|f|⟩_{Q_0} + max_Q T_{♯,Q} f`.
    pub pointwise_violations: usize,
    pub exceptional_points: usize,
}

impl RecursionCheck {
    pub fn passes(&self) -> bool {
        self.size_ok && self.nested_pairs == 0 && self.pointwise_violations == 0
    }
}

/// Inclusion-maximal members; duplicates removed.
pub fn maximal_cubes(cubes: &[DyadicCube]) -> Vec<DyadicCube> {
    let mut uniq: Vec<DyadicCube> = cubes.iter().cloned().collect::<HashSet<_>>().into_iter().collect();
    uniq.sort_by_key(|q| q.level);
    let mut keep: Vec<DyadicCube> = Vec::new();
    for q in uniq {
        if !keep.iter().any(|k| q.is_subset_of(k)) {
            keep.push(q);
        }
    }
    keep.sort();
    keep
}

struct Stopper<'a> {
    data: &'a TruncationData,
    window: LevelWindow,
    eps_d: f64,
}

impl Stopper<'_> {
    /// Cubes covering `{T_{♯,Q_0} f > C⟨|f|⟩_{Q_0}}`.
    fn run(&self, q0: &DyadicCube, c: f64) -> Result<(Vec<DyadicCube>, RecursionCheck)> {
        let data = self.data;
        let thr = c * data.average(q0);
        let cells = data.grid.cells_in_cube(q0);
        let covers: Vec<DyadicCube> = cells
            .par_iter()
            .filter_map(|&x| {
                let top = data.top_index(x, q0)?;
                if data.prefix[x][top] <= thr {
                    return None;
                }
                Some(self.cover_point(x, top, thr, q0))
            })
            .collect::<Result<Vec<_>>>()?;
        let exceptional = covers.len();
        let cubes = maximal_cubes(&covers);
        let mut check = self.check(q0, &cubes, thr)?;
        check.exceptional_points = exceptional;
        Ok((cubes, check))
    }

    fn cover_point(&self, x: usize, top: usize, thr: f64, q0: &DyadicCube) -> Result<DyadicCube> {
        let data = self.data;
        let s = self.good_start(x, top, thr);
        if s == 0 {
            return Err(Error::Internal("exceptional point without an exceeding pair".into()));
        }
        let sigma = data.radii[s];
        let p = data.grid.point(x);
        // slight inflation keeps the rounded distance to the new boundary at least 2σ
        cover_ball_within(q0, &p, 2.0 * sigma * (1.0 + 1e-12), &self.window)
            .or_else(|_| cover_ball_within(q0, &p, 2.0 * sigma, &self.window))
    }

    /// Smallest ladder index `s` with every pair `s ≤ i < j ≤ top` at most `thr`.
    fn good_start(&self, x: usize, top: usize, thr: f64) -> usize {
        let c = &self.data.cum[x];
        let mut s = top;
        let mut worst = 0.0f64;
        while s > 0 {
            let i = s - 1;
            for j in s..=top {
                worst = worst.max((c[i] - c[j]).norm());
            }
            if worst > thr {
                return s;
            }
            s -= 1;
        }
        0
    }

    fn check(&self, q0: &DyadicCube, cubes: &[DyadicCube], thr: f64) -> Result<RecursionCheck> {
        let data = self.data;
        let total: f64 = cubes.iter().map(|q| q.measure()).sum();
        let size_fraction = total / q0.measure();
        let mut nested = 0;
        for (a, qa) in cubes.iter().enumerate() {
            for (b, qb) in cubes.iter().enumerate() {
                if a != b && qa.is_subset_of(qb) {
                    nested += 1;
                }
            }
        }
        let mut best: std::collections::HashMap<usize, f64> = std::collections::HashMap::new();
        for q in cubes {
            if !q.is_subset_of(q0) {
                return Err(Error::Internal("stopping cube leaves its parent".into()));
            }
            for (x, v) in data.localized(q) {
                let e = best.entry(x).or_insert(0.0);
                *e = e.max(v);
            }
        }
        let violations = data
            .grid
            .cells_in_cube(q0)
            .into_iter()
            .filter(|&x| {
                let lhs = data.localized_at(x, q0);
                let rhs = thr + best.get(&x).copied().unwrap_or(0.0);
                // the bound is a triangle inequality on rounded moduli
                lhs > rhs * (1.0 + 1e-12)
            })
            .count();
        Ok(RecursionCheck {
            size_fraction,
            size_ok: size_fraction < self.eps_d,
            nested_pairs: nested,
            pointwise_violations: violations,
            exceptional_points: 0,
        })
    }
}

/// Result of one stopping call on a top cube.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StoppingResult {
    pub cubes: Vec<DyadicCube>,
    pub c_t0: f64,
    pub doublings: u32,
    pub check: RecursionCheck,
}

fn operator_scale(kernel: &KernelSpec, t_norm: f64) -> Result<f64> {
    let Some(dini) = kernel.dini_norm() else {
        return invalid("sparse domination needs a kernel with a Dini modulus");
    };
    Ok(t_norm + kernel.size_const() + dini)
}

fn check_top(grid: &Grid, q0: &DyadicCube, config: &StoppingConfig) -> Result<()> {
    if q0.dim() != grid.d {
        return invalid("cube and grid dimensions differ");
    }
    if q0.side() < config.min_top_cells * grid.h() {
        return Err(Error::InvalidResolution(format!(
            "top cube spans {} cells per side, need at least {}",
            q0.side() / grid.h(),
            config.min_top_cells
        )));
    }
    Ok(())
}

/// The exceptional-set cover of `q0`, doubling `C_T^0` until the cover is small.
pub fn stopping_cubes(
    q0: &DyadicCube,
    kernel: &KernelSpec,
    f: &GridFunction,
    config: &StoppingConfig,
) -> Result<StoppingResult> {
    config.validate(f.grid.d)?;
    check_top(&f.grid, q0, config)?;
    let radii = RadiiSet::from_radii(config.radii.clone())?;
    let data = TruncationData::new(&TruncationTable::build(kernel, f, &radii)?, f);
    let scale = operator_scale(kernel, config.t_norm)?;
    let stop = Stopper {
        data: &data,
        window: config.window,
        eps_d: config.eps_d,
    };
    for doublings in 0..=config.max_doublings {
        let c = config.c_multiplier * scale * 2f64.powi(doublings as i32);
        let (cubes, check) = stop.run(q0, c)?;
        if check.size_ok {
            return Ok(StoppingResult {
                cubes,
                c_t0: c,
                doublings,
                check,
            });
        }
    }
    Err(Error::DoublingCap {
        doublings: config.max_doublings,
        detail: "exceptional cover never dropped below eps_d |Q_0|".into(),
    })
}

/// Cube records keyed by shift, with per-cube sparseness fractions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseCollection {
    pub d: usize,
    /// Shift written as `"a0,a1"` to cube list.
    pub shifts: BTreeMap<String, Vec<DyadicCube>>,
    /// `|⋃ strict subcubes in the same shift| / |Q|`, in list order.
    pub certificate: BTreeMap<String, Vec<f64>>,
}

fn shift_key(alpha: &[u8]) -> String {
    alpha.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(",")
}

impl SparseCollection {
    pub fn from_cubes(d: usize, cubes: impl IntoIterator<Item = DyadicCube>) -> Result<Self> {
        let mut shifts: BTreeMap<String, Vec<DyadicCube>> = BTreeMap::new();
        for q in cubes {
            if q.dim() != d {
                return invalid("cube dimension differs from the collection");
            }
            shifts.entry(shift_key(&q.alpha)).or_default().push(q);
        }
        for list in shifts.values_mut() {
            list.sort();
            list.dedup();
        }
        let certificate = shifts
            .iter()
            .map(|(k, list)| (k.clone(), list.iter().map(|q| strict_sub_fraction(q, list)).collect()))
            .collect();
        Ok(SparseCollection { d, shifts, certificate })
    }

    pub fn cubes(&self) -> impl Iterator<Item = &DyadicCube> {
        self.shifts.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.shifts.values().map(|v| v.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("collection serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: SparseCollection =
            serde_json::from_str(text).map_err(|e| Error::InvalidInput(format!("bad collection: {e}")))?;
        let c = Self::from_cubes(raw.d, raw.shifts.into_values().flatten())?;
        Ok(c)
    }
}

/// `|⋃{Q' ∈ list : Q' ⊊ q}| / |q|` for a nested-or-disjoint list.
fn strict_sub_fraction(q: &DyadicCube, list: &[DyadicCube]) -> f64 {
    let subs: Vec<&DyadicCube> = list.iter().filter(|p| *p != q && p.is_subset_of(q)).collect();
    let d = q.dim() as i32;
    subs.iter()
        .filter(|p| !subs.iter().any(|r| r != *p && p.is_subset_of(r)))
        .map(|p| 2f64.powi(-d * (p.level - q.level)))
        .fold(0.0, |a, b| a + b)
}

/// Exact-coordinate measure of a union of cubes, relative to `|q|`.
fn union_fraction(q: &DyadicCube, cubes: &[&DyadicCube]) -> f64 {
    if cubes.is_empty() {
        return 0.0;
    }
    let d = q.dim();
    let unit = q.width_num() as f64;
    let span = |c: &DyadicCube, i: usize| (c.lower_num(i), c.lower_num(i) + c.width_num());
    if d == 1 {
        let mut iv: Vec<(i128, i128)> = cubes.iter().map(|c| span(c, 0)).collect();
        iv.sort();
        return merged_length(&iv) as f64 / unit;
    }
    let mut xs: Vec<i128> = cubes.iter().flat_map(|c| [span(c, 0).0, span(c, 0).1]).collect();
    xs.sort();
    xs.dedup();
    let mut area = 0.0;
    for w in xs.windows(2) {
        let mut iv: Vec<(i128, i128)> = cubes
            .iter()
            .filter(|c| {
                let s = span(c, 0);
                s.0 <= w[0] && w[1] <= s.1
            })
            .map(|c| span(c, 1))
            .collect();
        iv.sort();
        area += ((w[1] - w[0]) as f64 / unit) * (merged_length(&iv) as f64 / unit);
    }
    area
}

fn merged_length(sorted: &[(i128, i128)]) -> i128 {
    let mut total = 0;
    let mut cur: Option<(i128, i128)> = None;
    for &(a, b) in sorted {
        cur = match cur {
            Some((s, e)) if a <= e => Some((s, e.max(b))),
            Some((s, e)) => {
                total += e - s;
                Some((a, b))
            }
            None => Some((a, b)),
        };
    }
    if let Some((s, e)) = cur {
        total += e - s;
    }
    total
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SparsenessReport {
    pub pass: bool,
    pub worst_cube: Option<DyadicCube>,
    pub worst_fraction: f64,
}

/// Recomputes the strict-subcube fractions per shift and compares with `eta`.
pub fn verify_sparseness(collection: &SparseCollection, eta: f64) -> SparsenessReport {
    let mut worst = SparsenessReport {
        pass: true,
        worst_cube: None,
        worst_fraction: 0.0,
    };
    for list in collection.shifts.values() {
        for q in list {
            let fr = strict_sub_fraction(q, list);
            if fr > worst.worst_fraction || worst.worst_cube.is_none() {
                worst.worst_fraction = fr;
                worst.worst_cube = Some(q.clone());
            }
        }
    }
    worst.pass = worst.worst_fraction <= eta;
    worst
}

/// `Σ_α Σ_{Q ∈ S^α} 1_Q ⟨|f|⟩_Q` at the grid points.
pub fn sparse_apply(collection: &SparseCollection, f: &GridFunction) -> GridFunction {
    let g = f.grid;
    let abs = f.abs();
    let mut out = vec![0.0; g.len()];
    for q in collection.cubes() {
        let cells = g.cells_in_cube(q);
        let avg = cells.iter().map(|&x| abs[x]).sum::<f64>() * g.cell_volume() / q.measure();
        if avg > 0.0 {
            for x in cells {
                out[x] += avg;
            }
        }
    }
    GridFunction {
        grid: g,
        values: out.into_iter().map(|v| Complex64::new(v, 0.0)).collect(),
        periodic: false,
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DominationReport {
    pub pass: bool,
    /// `max T_♯ f / ((‖T‖ + C_K + ‖ω‖_Dini) A_S f)` over points with `A_S f > 0`.
    pub measured_constant: f64,
    /// Points with `A_S f = 0` but `T_♯ f > 0`.
    pub uncovered_points: usize,
}

fn domination_from(sharp: &[f64], scale: f64, collection: &SparseCollection, f: &GridFunction) -> DominationReport {
    let a = sparse_apply(collection, f);
    let mut constant = 0.0f64;
    let mut uncovered = 0;
    for (t, s) in sharp.iter().zip(&a.values) {
        if s.re > 0.0 {
            constant = constant.max(t / (scale * s.re));
        } else if *t > 0.0 {
            uncovered += 1;
        }
    }
    DominationReport {
        pass: uncovered == 0 && constant.is_finite(),
        measured_constant: constant,
        uncovered_points: uncovered,
    }
}

/// Compares `T_♯ f` with the sparse form at every grid point.
pub fn verify_domination(
    kernel: &KernelSpec,
    f: &GridFunction,
    collection: &SparseCollection,
    radii: &RadiiSet,
    t_norm: f64,
) -> Result<DominationReport> {
    let scale = operator_scale(kernel, t_norm)?;
    let table = TruncationTable::build(kernel, f, radii)?;
    Ok(domination_from(&table.maximal(), scale, collection, f))
}

/// Diagnostics of the whole construction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SparseReport {
    pub c_t0: f64,
    pub doublings: u32,
    pub generations: usize,
    pub stopping_calls: usize,
    /// Calls where all three recursion conditions held.
    pub recursion_passes: usize,
    pub worst_size_fraction: f64,
    pub nested_pairs: usize,
    pub pointwise_violations: usize,
    /// Cubes left unsplit because they fall below the terminal size.
    pub terminal_cubes: usize,
    /// `max |⋃ strict subcubes| / (5·3^{2d} ε_d |Q|)` over the recursive cubes, all shifts.
    pub overlap_ratio: f64,
    /// `max T_♯ f / (C_K ⟨|f|⟩_{P_{n+1}})` on `P_{n+1} ∖ P_n`.
    pub tail_constant: f64,
    pub tail_cubes: usize,
    pub domination: DominationReport,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SparseBuild {
    pub collection: SparseCollection,
    pub report: SparseReport,
    /// `P_0, P_1, …` from the support ball outwards.
    pub tail: Vec<DyadicCube>,
}

fn centre(q: &DyadicCube) -> Vec<f64> {
    let b = q.bounds();
    b.lower.iter().zip(&b.upper).map(|(a, c)| 0.5 * (a + c)).collect()
}

fn covers_domain(q: &DyadicCube, grid: &Grid) -> bool {
    let b = q.bounds();
    let half = 0.5 * grid.side;
    (0..grid.d).all(|i| b.lower[i] < -half && half < b.upper[i])
}

/// Sparse collection for `f` supported in `B(centre, radius)`.
///
/// `plan` must carry the ladder of `config`; it is reused across inputs.
pub fn build_sparse(
    plan: &TruncationPlan,
    kernel: &KernelSpec,
    f: &GridFunction,
    ball: (&[f64], f64),
    config: &StoppingConfig,
) -> Result<SparseBuild> {
    let g = f.grid;
    config.validate(g.d)?;
    if plan.radii != config.radii {
        return invalid("plan ladder differs from the configured ladder");
    }
    let (c, r) = ball;
    if c.len() != g.d || !(r > 0.0) {
        return invalid("support ball must have the grid dimension and a positive radius");
    }
    for x in 0..g.len() {
        let p = g.point(x);
        let dist = p.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if dist >= r && f.values[x].norm() > 0.0 {
            return invalid("f is not supported inside the ball");
        }
    }
    let scale = operator_scale(kernel, config.t_norm)?;
    let data = truncation_data(plan, f)?;
    let sqrt_d = (g.d as f64).sqrt();

    // P_0 ⊇ 2B; P_1 ⊇ 2κP_0 with room for one ladder step past diam(P_0) plus a cell
    let p0 = cover_ball(c, 2.0 * r, &config.window)?;
    let l0 = p0.side();
    let rho = RadiiSet::from_radii(config.radii.clone())?.rho;
    let reach = sqrt_d * l0 + g.cell_diagonal();
    if *config.radii.last().unwrap() < rho * reach {
        return invalid("ladder must extend one step past diam(P_0) plus a cell diagonal");
    }
    let kappa = 0.5 + 2.0 * rho * reach / l0;
    let p1 = cover_ball(&centre(&p0), kappa * l0 * sqrt_d, &config.window)?;
    check_top(&g, &p1, config)?;
    let mut tail = vec![p0, p1.clone()];
    while !covers_domain(tail.last().unwrap(), &g) && tail.len() < 64 {
        let last = tail.last().unwrap();
        tail.push(cover_ball(&centre(last), last.side() * sqrt_d, &config.window)?);
    }

    let stop = Stopper {
        data: &data,
        window: config.window,
        eps_d: config.eps_d,
    };
    let terminal = config.terminal_cells * g.h();
    'doubling: for doublings in 0..=config.max_doublings {
        let ct = config.c_multiplier * scale * 2f64.powi(doublings as i32);
        let mut checks = Vec::new();
        let (first, chk) = stop.run(&p1, ct)?;
        if !chk.size_ok {
            continue 'doubling;
        }
        checks.push(chk);
        let mut s_star: Vec<DyadicCube> = vec![p1.clone()];
        let mut families: Vec<(DyadicCube, Vec<DyadicCube>)> = vec![(p1.clone(), first.clone())];
        let mut active = first;
        let mut generations = 1;
        let mut terminal_cubes = 0;
        while !active.is_empty() {
            let top = active.iter().map(|q| q.level).min().unwrap();
            let (star, rest): (Vec<DyadicCube>, Vec<DyadicCube>) = active.into_iter().partition(|q| q.level == top);
            let results: Vec<Option<(Vec<DyadicCube>, RecursionCheck)>> = star
                .par_iter()
                .map(|q| if q.side() < terminal { Ok(None) } else { stop.run(q, ct).map(Some) })
                .collect::<Result<Vec<_>>>()?;
            let mut next = rest;
            for (q, res) in star.iter().zip(results) {
                match res {
                    None => terminal_cubes += 1,
                    Some((cubes, chk)) => {
                        if !chk.size_ok {
                            continue 'doubling;
                        }
                        checks.push(chk);
                        next.extend(cubes.iter().cloned());
                        families.push((q.clone(), cubes));
                    }
                }
            }
            s_star.extend(star);
            active = maximal_cubes(&next);
            generations += 1;
        }
        // counting bound over all shifts
        let bound = overlap_factor(g.d) * config.eps_d;
        let mut overlap_ratio = 0.0f64;
        for q in &s_star {
            let subs: Vec<&DyadicCube> = s_star.iter().filter(|p| *p != q && p.is_subset_of(q)).collect();
            overlap_ratio = overlap_ratio.max(union_fraction(q, &subs) / bound);
        }
        // tail estimate on P_{n+1} ∖ P_n
        let ck = kernel.size_const();
        let mut tail_constant = 0.0f64;
        for w in tail.windows(2) {
            let avg = data.average(&w[1]);
            for x in g.cells_in_cube(&w[1]) {
                if !w[0].contains(&g.point(x)) && data.sharp[x] > 0.0 {
                    tail_constant = tail_constant.max(data.sharp[x] / (ck * avg));
                }
            }
        }
        let collection = SparseCollection::from_cubes(g.d, s_star.iter().cloned().chain(tail[1..].iter().cloned()))?;
        let domination = domination_from(&data.sharp, scale, &collection, f);
        let report = SparseReport {
            c_t0: ct,
            doublings,
            generations,
            stopping_calls: checks.len(),
            recursion_passes: checks.iter().filter(|c| c.passes()).count(),
            worst_size_fraction: checks.iter().map(|c| c.size_fraction).fold(0.0, f64::max),
            nested_pairs: checks.iter().map(|c| c.nested_pairs).sum(),
            pointwise_violations: checks.iter().map(|c| c.pointwise_violations).sum(),
            terminal_cubes,
            overlap_ratio,
            tail_constant,
            tail_cubes: tail.len() - 1,
            domination,
        };
        return Ok(SparseBuild { collection, report, tail });
    }
    Err(Error::DoublingCap {
        doublings: config.max_doublings,
        detail: "some stopping cover stayed above eps_d |Q|".into(),
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WeightedBoundReport {
    /// Largest `‖A_S f‖_{L^p(w)} / ‖f‖_{L^p(w)}` found.
    pub norm_lower: f64,
    pub braces: f64,
    pub ratio: f64,
}

/// Lower bound of `‖A_S‖_{L^p(w)}` over random inputs and cube indicators,
/// relative to `{w}_{A_p}`.
pub fn sparse_weighted_bound_check(
    collection: &SparseCollection,
    w: &Weight,
    p: f64,
    fam: &CubeFamily,
    random_trials: usize,
    rng: &mut impl Rng,
) -> Result<WeightedBoundReport> {
    if !(p > 1.0 && p.is_finite()) {
        return invalid("p must lie in (1, ∞)");
    }
    let g = w.grid;
    let wv = w.values();
    let norm = |v: &[f64]| -> f64 { v.iter().zip(wv).map(|(a, b)| a.abs().powf(p) * b).sum::<f64>().powf(1.0 / p) };
    let mut tests: Vec<Vec<f64>> = Vec::new();
    for q in collection.cubes().chain(fam.cubes().iter()).take(400) {
        let mut v = vec![0.0; g.len()];
        for x in g.cells_in_cube(q) {
            v[x] = 1.0;
        }
        tests.push(v);
    }
    for _ in 0..random_trials {
        tests.push((0..g.len()).map(|_| rng.gen::<f64>()).collect());
    }
    let mut best = 0.0f64;
    for v in tests {
        let nf = norm(&v);
        if nf == 0.0 {
            continue;
        }
        let f = GridFunction::from_real(g, &v)?;
        let a = sparse_apply(collection, &f).re();
        best = best.max(norm(&a) / nf);
    }
    let braces = characteristics(w, p, fam)?.braces;
    Ok(WeightedBoundReport {
        norm_lower: best,
        braces,
        ratio: best / braces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cube(alpha: &[u8], level: i32, index: &[i64]) -> DyadicCube {
        DyadicCube::new(alpha.to_vec(), level, index.to_vec()).unwrap()
    }

    #[test]
    fn sparseness_certificates() {
        let q = cube(&[0], 0, &[0]);
        let half = cube(&[0], 1, &[0]);
        let c = SparseCollection::from_cubes(1, vec![q.clone(), half.clone()]).unwrap();
        let r = verify_sparseness(&c, 0.5);
        assert!(r.pass);
        assert_eq!(r.worst_fraction, 0.5);
        let both = SparseCollection::from_cubes(1, vec![q.clone(), half, cube(&[0], 1, &[1])]).unwrap();
        assert!(!verify_sparseness(&both, 0.5).pass);
        let empty = SparseCollection::from_cubes(1, vec![]).unwrap();
        assert!(verify_sparseness(&empty, 0.5).pass);
        // a nested chain counts once
        let chain = SparseCollection::from_cubes(1, vec![q, cube(&[0], 2, &[0]), cube(&[0], 3, &[0])]).unwrap();
        assert_eq!(chain.certificate["0"], vec![0.25, 0.5, 0.0]);
        let back = SparseCollection::from_json(&chain.to_json()).unwrap();
        assert_eq!(back, chain);
    }

    #[test]
    fn union_measure_across_shifts() {
        let q = cube(&[0, 0], 0, &[0, 0]);
        let a = cube(&[0, 0], 1, &[0, 0]);
        let b = cube(&[1, 1], 1, &[1, 1]);
        // b = [1/3, 5/6)^2 overlaps a = [0, 1/2)^2 in [1/3, 1/2)^2
        let u = union_fraction(&q, &[&a, &b]);
        let expect = 0.25 + 0.25 - 1.0 / 36.0;
        assert!((u - expect).abs() < 1e-15, "{u}");
        assert_eq!(union_fraction(&q, &[]), 0.0);
    }

    #[test]
    fn sparse_operator_basics() {
        let g = Grid::new(1, 64, 2.0).unwrap();
        let q = cube(&[0], 0, &[0]);
        let c = SparseCollection::from_cubes(1, vec![q.clone()]).unwrap();
        let ind = GridFunction::from_fn(g, |x| Complex64::new(if q.contains(x) { 1.0 } else { 0.0 }, 0.0));
        let a = sparse_apply(&c, &ind);
        assert!(a.values.iter().zip(&ind.values).all(|(u, v)| (u - v).norm() < 1e-14));
        let empty = SparseCollection::from_cubes(1, vec![]).unwrap();
        assert!(sparse_apply(&empty, &ind).is_zero());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f: Vec<f64> = (0..64).map(|_| rng.gen()).collect();
        let h: Vec<f64> = f.iter().map(|v| v + rng.gen::<f64>()).collect();
        let big = SparseCollection::from_cubes(1, vec![q, cube(&[1], 1, &[0]), cube(&[2], -1, &[-1])]).unwrap();
        let af = sparse_apply(&big, &GridFunction::from_real(g, &f).unwrap());
        let ah = sparse_apply(&big, &GridFunction::from_real(g, &h).unwrap());
        assert!(af.values.iter().zip(&ah.values).all(|(u, v)| u.re <= v.re + 1e-14));
    }

    #[test]
    fn weighted_bound_identity_weight() {
        let g = Grid::new(1, 64, 2.0).unwrap();
        let q = cube(&[0], 0, &[0]);
        let c = SparseCollection::from_cubes(1, vec![q]).unwrap();
        let w = Weight::new(g, vec![1.0; 64]).unwrap();
        let fam = CubeFamily::dyadic(g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = sparse_weighted_bound_check(&c, &w, 2.0, &fam, 10, &mut rng).unwrap();
        assert!((r.norm_lower - 1.0).abs() < 1e-12);
        let w3 = w.scaled(3.0).unwrap();
        let r3 = sparse_weighted_bound_check(&c, &w3, 2.0, &fam, 10, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert!((r3.ratio - r.ratio).abs() < 1e-12);
    }

    fn setup(n: usize) -> (Grid, KernelSpec, StoppingConfig, TruncationPlan) {
        let g = Grid::new(1, n, 1.0).unwrap();
        let k = KernelSpec::from_name("smooth-dini").unwrap();
        let radii = RadiiSet::geometric(g.cell_diagonal(), 2f64.sqrt(), 4.0).unwrap();
        let cfg = StoppingConfig::new(1, &radii, 4.0);
        let plan = TruncationPlan::new(&k, g, radii.radii()).unwrap();
        (g, k, cfg, plan)
    }

    #[test]
    fn zero_input_gives_tail_only() {
        let (g, k, cfg, plan) = setup(1024);
        let f = GridFunction::zeros(g);
        let b = build_sparse(&plan, &k, &f, (&[0.0], 1.0 / 64.0), &cfg).unwrap();
        assert_eq!(b.report.stopping_calls, 1);
        assert_eq!(b.collection.len(), b.tail.len() - 1);
        assert!(b.report.domination.pass);
        assert_eq!(b.report.domination.measured_constant, 0.0);
        let s = stopping_cubes(&b.tail[1], &k, &f, &cfg).unwrap();
        assert!(s.cubes.is_empty());
    }

    #[test]
    fn spike_builds_valid_collection() {
        let (g, k, cfg, plan) = setup(1024);
        let mut f = GridFunction::zeros(g);
        f.values[g.nearest_index(0.001)] = Complex64::new(1.0, 0.0);
        let b = build_sparse(&plan, &k, &f, (&[0.0], 1.0 / 64.0), &cfg).unwrap();
        let r = &b.report;
        assert_eq!(r.pointwise_violations, 0);
        assert_eq!(r.nested_pairs, 0);
        assert_eq!(r.recursion_passes, r.stopping_calls);
        assert!(r.worst_size_fraction < cfg.eps_d);
        assert!(r.overlap_ratio <= 1.0);
        assert!(verify_sparseness(&b.collection, 0.5).pass);
        assert!(r.domination.pass && r.domination.measured_constant > 0.0);
        // both sides are homogeneous of degree one
        let f3 = f.scale(Complex64::new(3.0, 0.0));
        let b3 = build_sparse(&plan, &k, &f3, (&[0.0], 1.0 / 64.0), &cfg).unwrap();
        assert_eq!(b3.collection, b.collection);
        let rel = (b3.report.domination.measured_constant / r.domination.measured_constant - 1.0).abs();
        assert!(rel < 1e-9);
        let radii = RadiiSet::from_radii(cfg.radii.clone()).unwrap();
        let again = verify_domination(&k, &f, &b.collection, &radii, cfg.t_norm).unwrap();
        assert!((again.measured_constant - r.domination.measured_constant).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        let (g, k, cfg, plan) = setup(1024);
        let mut f = GridFunction::zeros(g);
        f.values[g.nearest_index(0.3)] = Complex64::new(1.0, 0.0);
        assert!(build_sparse(&plan, &k, &f, (&[0.0], 1.0 / 64.0), &cfg).is_err());
        let small = cube(&[0], 4, &[0]);
        assert!(matches!(stopping_cubes(&small, &k, &f, &cfg), Err(Error::InvalidResolution(_))));
        let mut bad = cfg.clone();
        bad.eps_d = 0.5;
        assert!(bad.validate(1).is_err());
        let rough = KernelSpec::odd1d();
        assert!(build_sparse(&plan, &rough, &GridFunction::zeros(g), (&[0.0], 0.01), &cfg).is_err());
    }
}
