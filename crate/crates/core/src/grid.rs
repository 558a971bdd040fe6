//! Uniform cell-centred grids on `[-L/2, L/2)^d` and sampled functions.

use num_complex::Complex64;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::dyadic::{exact, DyadicCube};
use crate::error::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub d: usize,
    pub n: usize,
    pub side: f64,
}

impl Grid {
    pub fn new(d: usize, n: usize, side: f64) -> Result<Self> {
        if !(d == 1 || d == 2) {
            return invalid(format!("dimension {d} unsupported (1 or 2)"));
        }
        if n < 2 {
            return invalid("need at least 2 points per side");
        }
        if !(side > 0.0 && side.is_finite()) {
            return invalid("domain side must be positive");
        }
        Ok(Grid { d, n, side })
    }

    /// Cell width.
    pub fn h(&self) -> f64 {
        self.side / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.h().powi(self.d as i32)
    }

    pub fn cell_diagonal(&self) -> f64 {
        self.h() * (self.d as f64).sqrt()
    }

    pub fn diameter(&self) -> f64 {
        self.side * (self.d as f64).sqrt()
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Midpoint of cell `i` along one axis.
    pub fn coord(&self, i: usize) -> f64 {
        -0.5 * self.side + (i as f64 + 0.5) * self.h()
    }

    /// Axis indices of a flat index; axis 0 varies fastest.
    pub fn unflatten(&self, flat: usize) -> [usize; 2] {
        if self.d == 1 {
            [flat, 0]
        } else {
            [flat % self.n, flat / self.n]
        }
    }

    pub fn flatten(&self, idx: [usize; 2]) -> usize {
        idx[0] + self.n * idx[1]
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let idx = self.unflatten(flat);
        (0..self.d).map(|a| self.coord(idx[a])).collect()
    }

    /// Nearest cell index to a coordinate, clamped into the grid.
    pub fn nearest_index(&self, x: f64) -> usize {
        let t = ((x + 0.5 * self.side) / self.h() - 0.5).round();
        t.clamp(0.0, (self.n - 1) as f64) as usize
    }

    pub fn domain_contains_cube(&self, cube: &DyadicCube) -> bool {
        let half = exact(0.5 * self.side);
        (0..self.d).all(|i| -half.clone() <= cube.lower_exact(i) && cube.upper_exact(i) <= half)
    }

    /// Cells of one axis whose midpoints lie in `[lo, hi)`, exactly.
    pub fn axis_range(&self, lo: &BigRational, hi: &BigRational) -> std::ops::Range<usize> {
        let first = self.first_at_least(lo);
        let end = self.first_at_least(hi);
        first..end.max(first)
    }

    fn first_at_least(&self, t: &BigRational) -> usize {
        // float guess, then exact correction
        let tf = num_traits::ToPrimitive::to_f64(t).unwrap_or(0.0);
        let guess = ((tf + 0.5 * self.side) / self.h() - 0.5).ceil();
        let mut i = guess.clamp(0.0, self.n as f64) as usize;
        while i > 0 && exact(self.coord(i - 1)) >= *t {
            i -= 1;
        }
        while i < self.n && exact(self.coord(i)) < *t {
            i += 1;
        }
        i
    }

    /// Per-axis ranges of cells whose midpoints lie in the cube.
    pub fn cube_ranges(&self, cube: &DyadicCube) -> Vec<std::ops::Range<usize>> {
        (0..self.d)
            .map(|i| self.axis_range(&cube.lower_exact(i), &cube.upper_exact(i)))
            .collect()
    }

    /// Flat indices of cells whose midpoints lie in the cube.
    pub fn cells_in_cube(&self, cube: &DyadicCube) -> Vec<usize> {
        let r = self.cube_ranges(cube);
        let mut out = Vec::new();
        if self.d == 1 {
            out.extend(r[0].clone());
        } else {
            for j in r[1].clone() {
                for i in r[0].clone() {
                    out.push(self.flatten([i, j]));
                }
            }
        }
        out
    }

    /// Distance from each grid point to the boundary of the cube (0 outside).
    pub fn boundary_distance(&self, cube: &DyadicCube) -> Vec<f64> {
        let b = cube.bounds();
        let mut out = vec![0.0; self.len()];
        for flat in self.cells_in_cube(cube) {
            let idx = self.unflatten(flat);
            let mut dist = f64::INFINITY;
            for a in 0..self.d {
                let x = self.coord(idx[a]);
                dist = dist.min(x - b.lower[a]).min(b.upper[a] - x);
            }
            out[flat] = dist.max(0.0);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<Complex64>,
    /// Whether the samples are to be read as one period of a periodic function.
    pub periodic: bool,
}

impl GridFunction {
    pub fn zeros(grid: Grid) -> Self {
        GridFunction {
            grid,
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
            periodic: false,
        }
    }

    pub fn from_values(grid: Grid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return invalid("samples must be finite");
        }
        Ok(GridFunction {
            grid,
            values,
            periodic: false,
        })
    }

    pub fn from_real(grid: Grid, values: &[f64]) -> Result<Self> {
        Self::from_values(grid, values.iter().map(|&v| Complex64::new(v, 0.0)).collect())
    }

    pub fn from_fn(grid: Grid, f: impl Fn(&[f64]) -> Complex64) -> Self {
        let values = (0..grid.len()).map(|k| f(&grid.point(k))).collect();
        GridFunction {
            grid,
            values,
            periodic: false,
        }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        GridFunction {
            grid,
            values: vec![Complex64::new(c, 0.0); grid.len()],
            periodic: false,
        }
    }

    pub fn abs(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    pub fn re(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.re).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.re == 0.0 && v.im == 0.0)
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.grid.cell_volume()).sqrt()
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        (self.values.iter().map(|v| v.norm().powf(p)).sum::<f64>() * self.grid.cell_volume())
            .powf(1.0 / p)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        GridFunction {
            values: self.values.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    pub fn add(&self, other: &GridFunction) -> Self {
        GridFunction {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
            ..self.clone()
        }
    }

    pub fn sub(&self, other: &GridFunction) -> Self {
        GridFunction {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
            ..self.clone()
        }
    }

    /// `Σ f·conj(g)·h^d`.
    pub fn inner(&self, other: &GridFunction) -> Complex64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b.conj())
            .sum::<Complex64>()
            * self.grid.cell_volume()
    }

    /// Cyclic translation by whole cells along each axis.
    pub fn roll(&self, shift: [i64; 2]) -> Self {
        let g = self.grid;
        let n = g.n as i64;
        let mut out = vec![Complex64::new(0.0, 0.0); g.len()];
        for (k, v) in self.values.iter().enumerate() {
            let idx = g.unflatten(k);
            let mut t = [0usize; 2];
            for a in 0..g.d {
                t[a] = (idx[a] as i64 + shift[a]).rem_euclid(n) as usize;
            }
            out[g.flatten(t)] = *v;
        }
        GridFunction {
            values: out,
            ..self.clone()
        }
    }

    /// Point reflection `x ↦ -x` (cell midpoints are symmetric about 0).
    pub fn reflect(&self) -> Self {
        let g = self.grid;
        let mut out = vec![Complex64::new(0.0, 0.0); g.len()];
        for (k, v) in self.values.iter().enumerate() {
            let idx = g.unflatten(k);
            let mut t = [0usize; 2];
            for a in 0..g.d {
                t[a] = g.n - 1 - idx[a];
            }
            out[g.flatten(t)] = *v;
        }
        GridFunction {
            values: out,
            ..self.clone()
        }
    }

    /// Mean of `|f|` over grid cells with midpoints in the cube.
    pub fn cube_average_abs(&self, cube: &DyadicCube) -> Result<f64> {
        let cells = self.grid.cells_in_cube(cube);
        if cells.is_empty() {
            return Err(Error::InvalidResolution(
                "cube contains no grid midpoint".into(),
            ));
        }
        Ok(cells.iter().map(|&k| self.values[k].norm()).sum::<f64>() / cells.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoints_are_symmetric() {
        let g = Grid::new(1, 8, 2.0).unwrap();
        assert_eq!(g.coord(0), -0.875);
        assert_eq!(g.coord(7), 0.875);
        assert_eq!(g.nearest_index(0.1), 4);
    }

    #[test]
    fn cells_in_unit_cube() {
        let g = Grid::new(2, 16, 4.0).unwrap();
        let q = DyadicCube::new(vec![0, 0], 0, vec![0, 0]).unwrap();
        let cells = g.cells_in_cube(&q);
        assert_eq!(cells.len(), 16);
        for k in cells {
            assert!(q.contains(&g.point(k)));
        }
        assert!(g.domain_contains_cube(&q));
        let far = DyadicCube::new(vec![0, 0], 0, vec![2, 0]).unwrap();
        assert!(!g.domain_contains_cube(&far));
        assert!(g.cells_in_cube(&far).is_empty());
    }

    #[test]
    fn cube_ranges_match_membership() {
        let g = Grid::new(1, 96, 3.0).unwrap();
        for level in 0..5 {
            for alpha in 0..3u8 {
                for m in -3..3 {
                    let q = DyadicCube::new(vec![alpha], level, vec![m]).unwrap();
                    let cells = g.cells_in_cube(&q);
                    let brute: Vec<usize> = (0..g.n).filter(|&k| q.contains(&g.point(k))).collect();
                    assert_eq!(cells, brute);
                }
            }
        }
    }

    #[test]
    fn norms_and_inner_product() {
        let g = Grid::new(1, 4, 4.0).unwrap();
        let f = GridFunction::from_real(g, &[1.0, -2.0, 0.0, 2.0]).unwrap();
        assert_eq!(f.l1_norm(), 5.0);
        assert_eq!(f.l2_norm(), 3.0);
        assert_eq!(f.inner(&f).re, 9.0);
        assert_eq!(f.reflect().re(), vec![2.0, 0.0, -2.0, 1.0]);
        assert_eq!(f.roll([1, 0]).re(), vec![2.0, 1.0, -2.0, 0.0]);
        assert!(GridFunction::from_real(g, &[1.0]).is_err());
    }
}
