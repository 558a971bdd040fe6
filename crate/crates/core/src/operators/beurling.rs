//! Fourier-side oracle for powers of the Beurling transform.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fft::NdFft;
use crate::grid::{Grid, GridFunction};
use crate::operators::kernel::KernelSpec;
use crate::operators::truncation::TruncationPlan;

/// Which unimodular ratio represents `B`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BeurlingConvention {
    /// `ξ̄/ξ`
    ConjOverXi,
    /// `ξ/ξ̄`
    XiOverConj,
}

impl BeurlingConvention {
    pub fn as_str(&self) -> &'static str {
        match self {
            BeurlingConvention::ConjOverXi => "conj_over_xi",
            BeurlingConvention::XiOverConj => "xi_over_conj",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "conj_over_xi" => Some(BeurlingConvention::ConjOverXi),
            "xi_over_conj" => Some(BeurlingConvention::XiOverConj),
            _ => None,
        }
    }

    fn symbol(&self, xi: Complex64, m: i32) -> Complex64 {
        if xi.norm() == 0.0 {
            return Complex64::new(1.0, 0.0);
        }
        let u = xi.conj() / xi;
        let u = match self {
            BeurlingConvention::ConjOverXi => u,
            BeurlingConvention::XiOverConj => u.conj(),
        };
        u.powi(m)
    }
}

/// Multiplies the periodic DFT of `values` (an `n×n` array) by the symbol of `B^m`.
/// Negative `m` gives the adjoint.
pub fn apply_symbol(values: &[Complex64], n: usize, m: i32, conv: BeurlingConvention) -> Vec<Complex64> {
    let fft = NdFft::new(n, 2);
    let mut buf = values.to_vec();
    fft.forward(&mut buf);
    for (k, v) in buf.iter_mut().enumerate() {
        let xi = Complex64::new(fft.signed(k % n) as f64, fft.signed(k / n) as f64);
        *v *= conv.symbol(xi, m);
    }
    fft.inverse(&mut buf);
    buf
}

/// `B^m f` through the multiplier, treating `f` as one period.
pub fn beurling_multiplier_apply(m: u32, f: &GridFunction, conv: BeurlingConvention) -> Result<GridFunction> {
    if f.grid.d != 2 {
        return invalid("the Beurling multiplier acts on 2D grids");
    }
    if m == 0 {
        return Ok(f.clone());
    }
    let mut out = GridFunction::from_values(f.grid, apply_symbol(&f.values, f.grid.n, m as i32, conv))?;
    out.periodic = true;
    Ok(out)
}

/// `B^m` on compactly supported grid data: zero-pad to `2n`, multiply, crop.
pub struct PaddedBeurling {
    pub grid: Grid,
    pub m: i32,
    pub convention: BeurlingConvention,
}

impl PaddedBeurling {
    pub fn new(grid: Grid, m: u32, convention: BeurlingConvention) -> Result<Self> {
        if grid.d != 2 {
            return invalid("the Beurling multiplier acts on 2D grids");
        }
        Ok(PaddedBeurling {
            grid,
            m: m as i32,
            convention,
        })
    }

    fn run(&self, values: &[Complex64], m: i32) -> Vec<Complex64> {
        let n = self.grid.n;
        let p = 2 * n;
        let mut buf = vec![Complex64::new(0.0, 0.0); p * p];
        for j in 0..n {
            buf[j * p..j * p + n].copy_from_slice(&values[j * n..(j + 1) * n]);
        }
        let out = apply_symbol(&buf, p, m, self.convention);
        let mut res = vec![Complex64::new(0.0, 0.0); n * n];
        for j in 0..n {
            res[j * n..(j + 1) * n].copy_from_slice(&out[j * p..j * p + n]);
        }
        res
    }

    pub fn apply(&self, values: &[Complex64]) -> Vec<Complex64> {
        self.run(values, self.m)
    }

    pub fn apply_adjoint(&self, values: &[Complex64]) -> Vec<Complex64> {
        self.run(values, -self.m)
    }
}

/// Mean-zero band-limited probe: the Laplacian of a Gaussian of width `s`.
pub fn log_probe(grid: Grid, s: f64) -> GridFunction {
    GridFunction::from_fn(grid, |x| {
        let r2 = x[0] * x[0] + x[1] * x[1];
        let q = r2 / (2.0 * s * s);
        Complex64::new((q - 1.0) * (-q).exp(), 0.0)
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleStudy {
    pub m: u32,
    pub truncations: Vec<f64>,
    /// Relative L² error of `T_{ε,R} f` against the multiplier, per truncation.
    pub errors: Vec<f64>,
    pub convention: BeurlingConvention,
}

/// Relative L² errors of spatial truncations `T_{h√2, R}` against `B^m f`.
pub fn oracle_study(
    m: u32,
    grid: Grid,
    probe: &GridFunction,
    truncations: &[f64],
    convention: BeurlingConvention,
) -> Result<OracleStudy> {
    let kernel = KernelSpec::beurling(m)?;
    let mut radii = vec![grid.cell_diagonal()];
    radii.extend_from_slice(truncations);
    let table = TruncationPlan::new(&kernel, grid, &radii)?.apply(probe);
    let padded = PaddedBeurling::new(grid, m, convention)?;
    let target = GridFunction::from_values(grid, padded.apply(&probe.values))?;
    let norm = target.l2_norm();
    let errors = (1..radii.len())
        .map(|j| {
            let t = table.between(0, j);
            let e: f64 = t.iter().zip(&target.values).map(|(a, b)| (a - b).norm_sqr()).sum();
            (e * grid.cell_volume()).sqrt() / norm
        })
        .collect();
    Ok(OracleStudy {
        m,
        truncations: truncations.to_vec(),
        errors,
        convention,
    })
}

/// Picks the convention whose multiplier matches the `m = 1` spatial kernel.
pub fn pin_convention(grid: Grid) -> Result<BeurlingConvention> {
    let probe = log_probe(grid, grid.side / 32.0);
    let r = 0.5 * grid.side;
    let a = oracle_study(1, grid, &probe, &[r], BeurlingConvention::ConjOverXi)?;
    let b = oracle_study(1, grid, &probe, &[r], BeurlingConvention::XiOverConj)?;
    Ok(if a.errors[0] <= b.errors[0] {
        BeurlingConvention::ConjOverXi
    } else {
        BeurlingConvention::XiOverConj
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn multiplier_is_unitary() {
        let g = Grid::new(2, 32, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut f = GridFunction::from_real(g, &v).unwrap();
        let mean = f.values.iter().sum::<Complex64>() / g.len() as f64;
        f.values.iter_mut().for_each(|x| *x -= mean);
        for m in 0..4 {
            let b = beurling_multiplier_apply(m, &f, BeurlingConvention::ConjOverXi).unwrap();
            assert!((b.l2_norm() - f.l2_norm()).abs() < 1e-12 * f.l2_norm());
        }
        let same = beurling_multiplier_apply(0, &f, BeurlingConvention::ConjOverXi).unwrap();
        assert_eq!(same.values, f.values);
        let g1 = Grid::new(1, 8, 1.0).unwrap();
        assert!(beurling_multiplier_apply(1, &GridFunction::zeros(g1), BeurlingConvention::ConjOverXi).is_err());
    }

    #[test]
    fn padded_adjoint() {
        let g = Grid::new(2, 16, 1.0).unwrap();
        let b = PaddedBeurling::new(g, 2, BeurlingConvention::ConjOverXi).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f: Vec<Complex64> = (0..g.len()).map(|_| Complex64::new(rng.gen(), rng.gen())).collect();
        let u: Vec<Complex64> = (0..g.len()).map(|_| Complex64::new(rng.gen(), rng.gen())).collect();
        let lhs: Complex64 = b.apply(&f).iter().zip(&u).map(|(a, c)| a * c.conj()).sum();
        let rhs: Complex64 = f.iter().zip(b.apply_adjoint(&u)).map(|(a, c)| a * c.conj()).sum();
        assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn convention_matches_cartesian_kernel() {
        let g = Grid::new(2, 128, 1.0).unwrap();
        assert_eq!(pin_convention(g).unwrap(), BeurlingConvention::ConjOverXi);
    }
}
