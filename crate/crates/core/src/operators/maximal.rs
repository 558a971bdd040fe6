//! Maximal functions on grids.
//!
//! A discrete ball average at centre `c` and radius `r` is the sum of `|f|` over
//! lattice points `y` with `|y - c| < r`, divided by the number of lattice
//! offsets in that ball (points outside the domain count as zeros).

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::fft::PaddedConv;
use crate::grid::{Grid, GridFunction};
use crate::operators::kernel::RadiiSet;

/// Sliding maximum over `[i - k, i + k]`, clipped to the row.
pub fn sliding_max(row: &[f64], k: usize) -> Vec<f64> {
    let n = row.len();
    if k == 0 {
        return row.to_vec();
    }
    let w = 2 * k + 1;
    // van Herk / Gil–Werman with blocks of length w on a padded row
    let len = n + 2 * k;
    let at = |i: usize| if i < k || i >= n + k { f64::NEG_INFINITY } else { row[i - k] };
    let mut pre = vec![f64::NEG_INFINITY; len];
    let mut suf = vec![f64::NEG_INFINITY; len];
    for i in 0..len {
        pre[i] = if i % w == 0 { at(i) } else { pre[i - 1].max(at(i)) };
    }
    for i in (0..len).rev() {
        suf[i] = if i % w == w - 1 || i == len - 1 { at(i) } else { suf[i + 1].max(at(i)) };
    }
    (0..n).map(|i| suf[i].max(pre[i + 2 * k])).collect()
}

fn offsets_within(grid: &Grid, r: f64) -> Vec<[i64; 2]> {
    let h = grid.h();
    let k = (r / h).ceil() as i64;
    let mut out = vec![];
    let ys = if grid.d == 1 { 0..=0 } else { -k..=k };
    for j in ys {
        for i in -k..=k {
            if ((i * i + j * j) as f64).sqrt() * h < r {
                out.push([i, j]);
            }
        }
    }
    out
}

/// Disk-shaped maxima and averages for a fixed grid and radius ladder.
pub struct MaximalPlan {
    pub grid: Grid,
    pub radii: Vec<f64>,
    conv: PaddedConv,
    spectra: Vec<Vec<Complex64>>,
}

impl MaximalPlan {
    pub fn new(grid: Grid, radii: &[f64]) -> Self {
        let conv = PaddedConv::new(grid);
        let h = grid.h();
        let spectra = radii
            .iter()
            .map(|&r| {
                let count = offsets_within(&grid, r).len() as f64;
                conv.kernel_spectrum(|o| {
                    let dist = ((o[0] * o[0] + o[1] * o[1]) as f64).sqrt() * h;
                    if dist < r {
                        Complex64::new(1.0 / count, 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
            })
            .collect();
        MaximalPlan {
            grid,
            radii: radii.to_vec(),
            conv,
            spectra,
        }
    }

    /// Default ladder for the uncentred maximal function: the single-point ball
    /// `r = h`, then `h·2^{j/4}` up to the domain diameter.
    pub fn for_grid(grid: Grid) -> Self {
        let h = grid.h();
        let mut radii = vec![h];
        let rho = 2f64.powf(0.25);
        let mut r = h * rho;
        while r <= grid.diameter() * rho {
            radii.push(r);
            r *= rho;
        }
        Self::new(grid, &radii)
    }

    /// Centred ball averages of nonnegative data for ladder entry `i`.
    pub fn averages(&self, data_hat: &[Complex64], i: usize) -> Vec<f64> {
        self.conv
            .convolve(data_hat, &self.spectra[i])
            .into_iter()
            .map(|v| v.re.max(0.0))
            .collect()
    }

    pub fn spectrum(&self, data: &[f64]) -> Vec<Complex64> {
        let v: Vec<Complex64> = data.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.conv.data_spectrum(&v)
    }

    /// `max_{|c - x| < r} a(c)` over lattice centres.
    pub fn disk_max(&self, a: &[f64], r: f64) -> Vec<f64> {
        let g = self.grid;
        let h = g.h();
        let n = g.n;
        let kmax = (r / h).ceil() as usize;
        if g.d == 1 {
            let k = (0..=kmax).rev().find(|&i| (i as f64) * h < r).unwrap_or(0);
            return sliding_max(a, k);
        }
        // half-width of each row of the disk
        let half: Vec<Option<usize>> = (0..=kmax)
            .map(|dy| {
                (0..=kmax)
                    .rev()
                    .find(|&dx| (((dx * dx + dy * dy) as f64).sqrt()) * h < r)
            })
            .collect();
        let mut widths: Vec<usize> = half.iter().flatten().copied().collect();
        widths.sort_unstable();
        widths.dedup();
        let rows: Vec<(usize, Vec<f64>)> = widths
            .par_iter()
            .map(|&k| {
                let mut out = vec![0.0; g.len()];
                for y in 0..n {
                    let m = sliding_max(&a[y * n..(y + 1) * n], k);
                    out[y * n..(y + 1) * n].copy_from_slice(&m);
                }
                (k, out)
            })
            .collect();
        let lookup = |k: usize| &rows.iter().find(|(w, _)| *w == k).unwrap().1;
        let mut out = vec![f64::NEG_INFINITY; g.len()];
        out.par_chunks_mut(n).enumerate().for_each(|(y, row)| {
            for (dy, hk) in half.iter().enumerate() {
                let Some(k) = hk else { continue };
                let src = lookup(*k);
                for yy in [y as i64 - dy as i64, y as i64 + dy as i64] {
                    if yy < 0 || yy >= n as i64 {
                        continue;
                    }
                    let s = &src[yy as usize * n..(yy as usize + 1) * n];
                    for x in 0..n {
                        row[x] = row[x].max(s[x]);
                    }
                    if dy == 0 {
                        break;
                    }
                }
            }
        });
        out
    }

    /// Uncentred maximal function of nonnegative data over the ladder.
    pub fn uncentred(&self, data: &[f64]) -> Vec<f64> {
        let hat = self.spectrum(data);
        let per_radius: Vec<Vec<f64>> = (0..self.radii.len())
            .into_par_iter()
            .map(|i| {
                let a = if i == 0 && self.radii[0] <= self.grid.h() {
                    data.to_vec()
                } else {
                    self.averages(&hat, i)
                };
                self.disk_max(&a, self.radii[i])
            })
            .collect();
        pointwise_max(&per_radius, self.grid.len())
    }

    /// Centred maximal function over ladder entries with `eps < r < delta`.
    pub fn centred_between(&self, data: &[f64], eps: f64, delta: f64) -> Vec<f64> {
        let hat = self.spectrum(data);
        let per_radius: Vec<Vec<f64>> = (0..self.radii.len())
            .into_par_iter()
            .filter(|&i| eps < self.radii[i] && self.radii[i] < delta)
            .map(|i| self.averages(&hat, i))
            .collect();
        pointwise_max(&per_radius, self.grid.len())
    }
}

fn pointwise_max(rows: &[Vec<f64>], len: usize) -> Vec<f64> {
    let mut out = vec![0.0f64; len];
    for r in rows {
        for (o, v) in out.iter_mut().zip(r) {
            *o = o.max(*v);
        }
    }
    out
}

/// Uncentred Hardy–Littlewood maximal function `M f`.
pub fn hl_maximal(f: &GridFunction) -> Vec<f64> {
    MaximalPlan::for_grid(f.grid).uncentred(&f.abs())
}

/// `M^c_{ε,δ} f` over the given ladder.
pub fn truncated_centered_maximal(f: &GridFunction, eps: f64, delta: f64, radii: &RadiiSet) -> Result<Vec<f64>> {
    if !(eps < delta) {
        return invalid("need eps < delta");
    }
    Ok(MaximalPlan::new(f.grid, radii.radii()).centred_between(&f.abs(), eps, delta))
}

/// `M_δ f = (M |f|^δ)^{1/δ}`.
pub fn m_delta(f: &GridFunction, delta_exp: f64) -> Result<Vec<f64>> {
    if !(delta_exp > 0.0 && delta_exp <= 1.0) {
        return invalid("delta exponent must lie in (0, 1]");
    }
    let powered: Vec<f64> = f.abs().iter().map(|v| v.powf(delta_exp)).collect();
    Ok(MaximalPlan::for_grid(f.grid)
        .uncentred(&powered)
        .into_iter()
        .map(|v| v.powf(1.0 / delta_exp))
        .collect())
}

/// `sup_λ λ |{g > λ}| / ‖f‖_1` for nonnegative `g`, with `‖f‖_1` given.
pub fn weak_type_ratio(g: &[f64], cell_volume: f64, f_l1: f64) -> f64 {
    if f_l1 == 0.0 {
        return 0.0;
    }
    let mut v: Vec<f64> = g.to_vec();
    v.sort_by(|a, b| b.partial_cmp(a).unwrap());
    // level just below the k-th largest value catches k points
    let best = v
        .iter()
        .enumerate()
        .map(|(k, &val)| val * (k + 1) as f64 * cell_volume)
        .fold(0.0, f64::max);
    best / f_l1
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_uncentred(g: &Grid, data: &[f64], radii: &[f64]) -> Vec<f64> {
        let pts: Vec<Vec<f64>> = (0..g.len()).map(|k| g.point(k)).collect();
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let mut out = vec![0.0f64; g.len()];
        for &r in radii {
            let count = offsets_within(g, r).len() as f64;
            let avg: Vec<f64> = (0..g.len())
                .map(|c| (0..g.len()).filter(|&y| dist(&pts[c], &pts[y]) < r * (1.0 - 1e-12)).map(|y| data[y]).sum::<f64>() / count)
                .collect();
            for x in 0..g.len() {
                for c in 0..g.len() {
                    if dist(&pts[c], &pts[x]) < r * (1.0 - 1e-12) {
                        out[x] = out[x].max(avg[c]);
                    }
                }
            }
        }
        out
    }

    #[test]
    fn sliding_max_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let row: Vec<f64> = (0..37).map(|_| rng.gen()).collect();
        for k in 0..40 {
            let got = sliding_max(&row, k);
            for i in 0..row.len() {
                let lo = i.saturating_sub(k);
                let hi = (i + k).min(row.len() - 1);
                let want = row[lo..=hi].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(got[i], want);
            }
        }
    }

    #[test]
    fn uncentred_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for d in [1, 2] {
            let g = Grid::new(d, 12, 1.0).unwrap();
            let data: Vec<f64> = (0..g.len()).map(|_| rng.gen::<f64>().powi(3)).collect();
            let plan = MaximalPlan::for_grid(g);
            let got = plan.uncentred(&data);
            let want = brute_uncentred(&g, &data, &plan.radii[1..]);
            for x in 0..g.len() {
                let want = want[x].max(data[x]);
                assert!((got[x] - want).abs() < 1e-12, "d={d} x={x} {} {}", got[x], want);
            }
        }
    }

    #[test]
    fn constants_and_pointwise_bounds() {
        let g = Grid::new(2, 16, 1.0).unwrap();
        let c = GridFunction::constant(g, 2.5);
        let m = hl_maximal(&c);
        assert!(m.iter().all(|v| (v - 2.5).abs() < 1e-12));
        let md = m_delta(&c, 0.5).unwrap();
        assert!(md.iter().all(|v| (v - 2.5).abs() < 1e-12));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let f = GridFunction::from_real(g, &v).unwrap();
        let mf = hl_maximal(&f);
        let m1 = m_delta(&f, 1.0).unwrap();
        let mhalf = m_delta(&f, 0.5).unwrap();
        let radii = RadiiSet::for_grid(&g);
        let mc = truncated_centered_maximal(&f, 0.0, 10.0, &radii).unwrap();
        let narrow = truncated_centered_maximal(&f, 0.1, 0.3, &radii).unwrap();
        for x in 0..g.len() {
            assert!(mf[x] >= v[x].abs());
            assert!((m1[x] - mf[x]).abs() < 1e-12);
            assert!(mhalf[x] <= mf[x] * (1.0 + 1e-10));
            assert!(mc[x] <= mf[x] + 1e-12);
            assert!(narrow[x] <= mc[x] + 1e-15);
        }
        assert!(m_delta(&f, 0.0).is_err());
    }

    #[test]
    fn weak_type_of_spike() {
        let g = Grid::new(1, 64, 1.0).unwrap();
        let mut v = vec![0.0; 64];
        v[32] = 1.0 / g.h();
        let f = GridFunction::from_real(g, &v).unwrap();
        let ratio = weak_type_ratio(&hl_maximal(&f), g.cell_volume(), f.l1_norm());
        assert!(ratio > 0.5 && ratio < 3.0, "{ratio}");
    }
}
