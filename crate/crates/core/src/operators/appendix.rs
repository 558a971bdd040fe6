//! Numerical probes of the weak (1,1) bound, Cotlar's inequality and the
//! truncation continuity lemma.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::GridFunction;
use crate::operators::kernel::{KernelSpec, RadiiSet};
use crate::operators::maximal::{weak_type_ratio, MaximalPlan};
use crate::operators::truncation::{TruncationPlan, TruncationTable};

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Grid index pairs `(x, x')` with `0 < |x - x'| < eps/2`.
pub fn sample_pairs(f: &GridFunction, eps: f64, count: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    let g = f.grid;
    let h = g.h();
    let reach = ((0.5 * eps / h).ceil() as i64).max(1);
    let mut out = Vec::with_capacity(count);
    let mut guard = 0;
    while out.len() < count && guard < 100 * count {
        guard += 1;
        let x = rng.gen_range(0..g.len());
        let xi = g.unflatten(x);
        let mut t = [0usize; 2];
        let mut dist2 = 0.0;
        let mut ok = true;
        for a in 0..g.d {
            let s = rng.gen_range(-reach..=reach);
            let v = xi[a] as i64 + s;
            if v < 0 || v >= g.n as i64 {
                ok = false;
            }
            t[a] = v.max(0) as usize;
            dist2 += (s as f64 * h).powi(2);
        }
        let dist = dist2.sqrt();
        if ok && dist > 0.0 && dist < 0.5 * eps {
            out.push((x, g.flatten(t)));
        }
    }
    out
}

/// `max |T_{ε,δ}f(x) - T_{ε,δ}f(x')| / ((C_K + ‖ω‖_Dini) M^c_{ε,2δ}f(x))`.
pub fn continuity_lemma_check(
    kernel: &KernelSpec,
    f: &GridFunction,
    eps: f64,
    delta: f64,
    pairs: &[(usize, usize)],
    radii: &RadiiSet,
) -> Result<f64> {
    let Some(dini) = kernel.dini_norm() else {
        return invalid("continuity lemma needs a smooth kernel");
    };
    let g = f.grid;
    for &(x, y) in pairs {
        let (p, q) = (g.point(x), g.point(y));
        let dist = p.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if dist >= 0.5 * eps {
            return invalid("pair separation must be below eps/2");
        }
    }
    let plan = TruncationPlan::new(kernel, g, &[eps, delta])?;
    let t = plan.apply(f).between(0, 1);
    let mc = MaximalPlan::new(g, radii.radii()).centred_between(&f.abs(), eps, 2.0 * delta);
    let scale = kernel.size_const() + dini;
    Ok(pairs
        .iter()
        .map(|&(x, y)| ratio((t[x] - t[y]).norm(), scale * mc[x]))
        .fold(0.0, f64::max))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Weak11Report {
    pub ratio: f64,
    /// Index of the maximising test function.
    pub argmax: usize,
}

/// `sup_f sup_λ λ |{|T f| > λ}| / ‖f‖_1` with `T = T_{ε_min, ∞}`.
pub fn weak11_ratio(kernel: &KernelSpec, tests: &[GridFunction], eps: f64) -> Result<Weak11Report> {
    let Some(first) = tests.first() else {
        return Ok(Weak11Report { ratio: 0.0, argmax: 0 });
    };
    let plan = TruncationPlan::new(kernel, first.grid, &[eps])?;
    let mut best = Weak11Report { ratio: 0.0, argmax: 0 };
    for (i, f) in tests.iter().enumerate() {
        let tf = plan.apply(f);
        let mag: Vec<f64> = tf.cum[0].iter().map(|v| v.norm()).collect();
        let r = weak_type_ratio(&mag, f.grid.cell_volume(), f.l1_norm());
        if r > best.ratio {
            best = Weak11Report { ratio: r, argmax: i };
        }
    }
    Ok(best)
}

/// Smallest `c` with `T_♯ f ≤ c((‖T‖ + ‖ω‖_Dini) M f + M_δ(T f))` on the grid.
pub fn cotlar_check(
    kernel: &KernelSpec,
    f: &GridFunction,
    delta_exp: f64,
    t_norm: f64,
    radii: &RadiiSet,
) -> Result<f64> {
    if !(delta_exp > 0.0 && delta_exp < 1.0) {
        return invalid("Cotlar exponent must lie in (0, 1)");
    }
    let Some(dini) = kernel.dini_norm() else {
        return invalid("Cotlar check needs a smooth kernel");
    };
    let g = f.grid;
    let table = TruncationTable::build(kernel, f, radii)?;
    let sharp = table.maximal();
    let tf: Vec<f64> = table.cum[0].iter().map(|v| v.norm().powf(delta_exp)).collect();
    let plan = MaximalPlan::for_grid(g);
    let mf = plan.uncentred(&f.abs());
    let md: Vec<f64> = plan.uncentred(&tf).into_iter().map(|v| v.powf(1.0 / delta_exp)).collect();
    Ok((0..g.len())
        .map(|x| ratio(sharp[x], (t_norm + dini) * mf[x] + md[x]))
        .fold(0.0, f64::max))
}

/// Single spike of unit mass at the cell nearest `x`.
pub fn spike(grid: crate::grid::Grid, x: &[f64]) -> GridFunction {
    let mut f = GridFunction::zeros(grid);
    let mut idx = [0usize; 2];
    for a in 0..grid.d {
        idx[a] = grid.nearest_index(x[a]);
    }
    f.values[grid.flatten(idx)] = Complex64::new(1.0 / grid.cell_volume(), 0.0);
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_inputs_give_zero() {
        let g = Grid::new(1, 128, 4.0).unwrap();
        let k = KernelSpec::from_name("smooth-dini").unwrap();
        let z = GridFunction::zeros(g);
        let radii = RadiiSet::for_grid(&g);
        assert_eq!(cotlar_check(&k, &z, 0.5, 1.0, &radii).unwrap(), 0.0);
        assert_eq!(weak11_ratio(&k, &[z.clone()], g.cell_diagonal()).unwrap().ratio, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pairs = sample_pairs(&z, 0.25, 50, &mut rng);
        assert_eq!(continuity_lemma_check(&k, &z, 0.25, 1.0, &pairs, &radii).unwrap(), 0.0);
        let same: Vec<(usize, usize)> = (0..10).map(|x| (x, x)).collect();
        let f = spike(g, &[0.0]);
        assert_eq!(continuity_lemma_check(&k, &f, 0.25, 1.0, &same, &radii).unwrap(), 0.0);
    }

    #[test]
    fn spike_weak_type_matches_tail() {
        // T δ_0 (x) ≈ 1/x away from the origin: λ|{1/|x| > λ}| = 2 for every λ
        let g = Grid::new(1, 1024, 8.0).unwrap();
        let k = KernelSpec::odd1d();
        let f = spike(g, &[0.0]);
        let r = weak11_ratio(&k, &[f.clone()], g.cell_diagonal()).unwrap();
        assert!(r.ratio > 1.5 && r.ratio < 2.5, "{}", r.ratio);
        let more = weak11_ratio(&k, &[f.clone(), f.scale(Complex64::new(2.0, 0.0))], g.cell_diagonal()).unwrap();
        assert!(more.ratio >= r.ratio - 1e-12);
    }
}
