//! Thin n-dimensional FFT layer over `rustfft` and zero-padded linear convolution.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::grid::Grid;

fn transpose(data: &[Complex64], p: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for j in 0..p {
        for i in 0..p {
            out[i * p + j] = data[j * p + i];
        }
    }
    out
}

fn run_rows(fft: &Arc<dyn Fft<f64>>, data: &mut [Complex64], p: usize) {
    data.par_chunks_mut(p).for_each(|row| fft.process(row));
}

/// Unnormalised transform of a `p^d` array (axis 0 fastest).
pub struct NdFft {
    pub p: usize,
    pub d: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl NdFft {
    pub fn new(p: usize, d: usize) -> Self {
        let mut planner = FftPlanner::new();
        NdFft {
            p,
            d,
            forward: planner.plan_fft_forward(p),
            inverse: planner.plan_fft_inverse(p),
        }
    }

    fn apply(&self, data: &mut Vec<Complex64>, fft: &Arc<dyn Fft<f64>>) {
        assert_eq!(data.len(), self.p.pow(self.d as u32));
        run_rows(fft, data, self.p);
        if self.d == 2 {
            let mut t = transpose(data, self.p);
            run_rows(fft, &mut t, self.p);
            *data = transpose(&t, self.p);
        }
    }

    pub fn forward(&self, data: &mut Vec<Complex64>) {
        self.apply(data, &self.forward.clone());
    }

    /// Inverse transform including the `1/p^d` normalisation.
    pub fn inverse(&self, data: &mut Vec<Complex64>) {
        self.apply(data, &self.inverse.clone());
        let s = 1.0 / data.len() as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }

    /// Signed frequency index of position `t` (`t - p` for the upper half).
    pub fn signed(&self, t: usize) -> i64 {
        if t <= self.p / 2 {
            t as i64
        } else {
            t as i64 - self.p as i64
        }
    }
}

/// Free-space convolution of grid data with a kernel given on cell offsets.
///
/// Data are embedded in a `2n`-periodic array, so offsets in `(-n, n)` never alias.
pub struct PaddedConv {
    pub grid: Grid,
    fft: NdFft,
}

impl PaddedConv {
    pub fn new(grid: Grid) -> Self {
        PaddedConv {
            grid,
            fft: NdFft::new(2 * grid.n, grid.d),
        }
    }

    fn padded_len(&self) -> usize {
        self.fft.p.pow(self.grid.d as u32)
    }

    pub fn data_spectrum(&self, values: &[Complex64]) -> Vec<Complex64> {
        let p = self.fft.p;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.padded_len()];
        for (k, v) in values.iter().enumerate() {
            let idx = self.grid.unflatten(k);
            buf[idx[0] + p * idx[1]] = *v;
        }
        self.fft.forward(&mut buf);
        buf
    }

    /// Offsets `o` (in cells) of every padded slot; the slot at `n` is unused.
    pub fn offsets(&self) -> Vec<Option<[i64; 2]>> {
        let (n, p) = (self.grid.n as i64, self.fft.p as i64);
        let off = |t: i64| -> Option<i64> {
            if t < n {
                Some(t)
            } else if t > n {
                Some(t - p)
            } else {
                None
            }
        };
        (0..self.padded_len() as i64)
            .map(|k| {
                let (t0, t1) = (k % p, k / p);
                match self.grid.d {
                    1 => off(t0).map(|a| [a, 0]),
                    _ => match (off(t0), off(t1)) {
                        (Some(a), Some(b)) => Some([a, b]),
                        _ => None,
                    },
                }
            })
            .collect()
    }

    /// Spectrum of a kernel tabulated on the padded offset layout.
    pub fn kernel_spectrum_from_table(&self, mut table: Vec<Complex64>) -> Vec<Complex64> {
        assert_eq!(table.len(), self.padded_len());
        self.fft.forward(&mut table);
        table
    }

    pub fn kernel_spectrum(&self, kern: impl Fn([i64; 2]) -> Complex64 + Sync) -> Vec<Complex64> {
        let table = self
            .offsets()
            .par_iter()
            .map(|o| o.map_or(Complex64::new(0.0, 0.0), &kern))
            .collect();
        self.kernel_spectrum_from_table(table)
    }

    /// `out(x) = Σ_y K(x - y) f(y)`, cropped back to the grid.
    pub fn convolve(&self, data_hat: &[Complex64], kernel_hat: &[Complex64]) -> Vec<Complex64> {
        let p = self.fft.p;
        let mut buf: Vec<Complex64> = data_hat.iter().zip(kernel_hat).map(|(a, b)| a * b).collect();
        self.fft.inverse(&mut buf);
        (0..self.grid.len())
            .map(|k| {
                let idx = self.grid.unflatten(k);
                buf[idx[0] + p * idx[1]]
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn direct(g: &Grid, f: &[Complex64], kern: impl Fn([i64; 2]) -> Complex64) -> Vec<Complex64> {
        (0..g.len())
            .map(|x| {
                let xi = g.unflatten(x);
                (0..g.len())
                    .map(|y| {
                        let yi = g.unflatten(y);
                        let o = [xi[0] as i64 - yi[0] as i64, xi[1] as i64 - yi[1] as i64];
                        kern(o) * f[y]
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn padded_convolution_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in [1, 2] {
            let g = Grid::new(d, 7, 1.0).unwrap();
            let f: Vec<Complex64> = (0..g.len())
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let kern = |o: [i64; 2]| Complex64::new((o[0] as f64 * 0.3).sin(), o[1] as f64 * 0.1 + 0.2);
            let conv = PaddedConv::new(g);
            let got = conv.convolve(&conv.data_spectrum(&f), &conv.kernel_spectrum(kern));
            let want = direct(&g, &f, kern);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let t = NdFft::new(8, 2);
        let orig: Vec<Complex64> = (0..64).map(|k| Complex64::new(k as f64, -(k as f64))).collect();
        let mut v = orig.clone();
        t.forward(&mut v);
        t.inverse(&mut v);
        for (a, b) in v.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
        assert_eq!(t.signed(5), -3);
    }
}
