//! Kernel descriptions: rough homogeneous kernels and smooth Calderón–Zygmund kernels.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::special::adaptive_simpson;

pub type VectorFn = Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;

/// Increasing subadditive `ω` with `ω(0) = 0`, plus its Dini integral.
#[derive(Clone)]
pub struct ModulusOfContinuity {
    pub omega: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub dini_norm: f64,
}

impl ModulusOfContinuity {
    pub fn new(omega: Arc<dyn Fn(f64) -> f64 + Send + Sync>) -> Result<Self> {
        let w = omega.clone();
        let dini_norm = adaptive_simpson(&|t: f64| if t > 0.0 { w(t) / t } else { 0.0 }, 0.0, 1.0, 1e-12);
        let m = ModulusOfContinuity { omega, dini_norm };
        m.check()?;
        Ok(m)
    }

    /// `ω(t) = c·t`; Dini integral `c`.
    pub fn linear(c: f64) -> Self {
        ModulusOfContinuity {
            omega: Arc::new(move |t| c * t),
            dini_norm: c,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.omega)(t)
    }

    /// Samples monotonicity, subadditivity and `ω(0) = 0`.
    pub fn check(&self) -> Result<()> {
        if self.eval(0.0) != 0.0 {
            return invalid("modulus must vanish at 0");
        }
        let ts: Vec<f64> = (0..=64).map(|i| 2f64.powf(-12.0 + i as f64 * 0.25)).collect();
        for w in ts.windows(2) {
            if self.eval(w[1]) < self.eval(w[0]) {
                return invalid("modulus must be increasing");
            }
        }
        for &s in &ts {
            for &t in &ts {
                if self.eval(s + t) > (self.eval(s) + self.eval(t)) * (1.0 + 1e-12) {
                    return invalid("modulus must be subadditive");
                }
            }
        }
        if !self.dini_norm.is_finite() {
            return invalid("Dini integral diverges");
        }
        Ok(())
    }
}

/// `Ω(x/|x|)/|x|^d` with bounded, mean-zero `Ω`.
#[derive(Clone)]
pub struct RoughKernel {
    pub d: usize,
    pub name: String,
    pub omega: VectorFn,
    pub omega_sup: f64,
    /// Angular Fourier modes `Ω(θ) = Σ c_n e^{inθ}` (d = 2), or the values
    /// `Ω(+1)`, `Ω(-1)` stored as modes `1` and `-1` (d = 1).
    pub modes: Vec<(i32, Complex64)>,
}

/// Smooth convolution kernel `K(x)` with size constant and modulus.
#[derive(Clone)]
pub struct SmoothKernel {
    pub d: usize,
    pub name: String,
    pub kernel: VectorFn,
    pub size_const: f64,
    pub modulus: ModulusOfContinuity,
}

#[derive(Clone)]
pub enum KernelSpec {
    Rough(RoughKernel),
    Smooth(SmoothKernel),
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KernelSpec({})", self.name())
    }
}

/// Parameters of the smooth test kernel `scale · x_c/|x|^{d+1}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothDiniParams {
    pub dim: usize,
    pub component: usize,
    pub scale: f64,
}

impl Default for SmoothDiniParams {
    fn default() -> Self {
        SmoothDiniParams {
            dim: 1,
            component: 1,
            scale: 1.0,
        }
    }
}

impl SmoothDiniParams {
    /// Reads `key = value` lines (`dim`, `component`, `scale`); `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut p = SmoothDiniParams::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return invalid(format!("line {}: expected key = value", no + 1));
            };
            let v = v.trim();
            let bad = |what: &str| Error::InvalidInput(format!("line {}: bad {what} '{v}'", no + 1));
            match k.trim() {
                "dim" => p.dim = v.parse().map_err(|_| bad("dim"))?,
                "component" => p.component = v.parse().map_err(|_| bad("component"))?,
                "scale" => p.scale = v.parse().map_err(|_| bad("scale"))?,
                other => return invalid(format!("line {}: unknown key '{other}'", no + 1)),
            }
        }
        if !(p.dim == 1 || p.dim == 2) || p.component == 0 || p.component > p.dim {
            return invalid("smooth-dini needs dim in {1,2} and 1 <= component <= dim");
        }
        if !(p.scale > 0.0 && p.scale.is_finite()) {
            return invalid("smooth-dini scale must be positive");
        }
        Ok(p)
    }
}

impl KernelSpec {
    /// Hilbert-type kernel on the line: `Ω(±1) = ±1`, `K(x) = 1/x`.
    pub fn odd1d() -> Self {
        KernelSpec::Rough(RoughKernel {
            d: 1,
            name: "odd1d".into(),
            omega: Arc::new(|u: &[f64]| Complex64::new(u[0].signum(), 0.0)),
            omega_sup: 1.0,
            modes: vec![(1, Complex64::new(1.0, 0.0)), (-1, Complex64::new(-1.0, 0.0))],
        })
    }

    /// Kernel of the `m`-th power of the Beurling transform,
    /// `Ω_m(e^{iφ}) = (-1)^m m/π · e^{-2imφ}`.
    pub fn beurling(m: u32) -> Result<Self> {
        if m == 0 {
            return invalid("Beurling power must be at least 1");
        }
        let c = if m % 2 == 0 { 1.0 } else { -1.0 } * m as f64 / PI;
        let mm = m as f64;
        Ok(KernelSpec::Rough(RoughKernel {
            d: 2,
            name: format!("beurling:{m}"),
            omega: Arc::new(move |u: &[f64]| {
                let phi = u[1].atan2(u[0]);
                Complex64::from_polar(c, -2.0 * mm * phi)
            }),
            omega_sup: m as f64 / PI,
            modes: vec![(-2 * m as i32, Complex64::new(c, 0.0))],
        }))
    }

    /// Rough kernel from a sampled angular profile (d = 2); modes found by FFT.
    pub fn rough_from_angle(name: &str, omega: Arc<dyn Fn(f64) -> Complex64 + Send + Sync>) -> Result<Self> {
        let samples = 512;
        let vals: Vec<Complex64> = (0..samples)
            .map(|k| omega(2.0 * PI * k as f64 / samples as f64))
            .collect();
        let sup = vals.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let mut modes = Vec::new();
        for n in -(samples as i32 / 2 - 1)..(samples as i32 / 2) {
            let c: Complex64 = vals
                .iter()
                .enumerate()
                .map(|(k, v)| v * Complex64::from_polar(1.0, -(n as f64) * 2.0 * PI * k as f64 / samples as f64))
                .sum::<Complex64>()
                / samples as f64;
            if c.norm() > 1e-13 * sup.max(1e-300) {
                modes.push((n, c));
            }
        }
        let f = omega.clone();
        let kernel = KernelSpec::Rough(RoughKernel {
            d: 2,
            name: name.to_string(),
            omega: Arc::new(move |u: &[f64]| f(u[1].atan2(u[0]))),
            omega_sup: sup,
            modes,
        });
        kernel.check_invariants()?;
        Ok(kernel)
    }

    /// `scale · x_c / |x|^{d+1}`: size constant `scale`, modulus
    /// `ω(t) = 2·G·2^{d+1}·scale·t` where `G` bounds `|x|^{d+1}|∇K(x)|`.
    pub fn smooth_dini(params: SmoothDiniParams) -> Result<Self> {
        let SmoothDiniParams {
            dim,
            component,
            scale,
        } = params;
        if !(dim == 1 || dim == 2) || component == 0 || component > dim {
            return invalid("smooth-dini needs dim in {1,2} and 1 <= component <= dim");
        }
        let c = component - 1;
        let gradient = if dim == 1 { 1.0 } else { 2.0 };
        let lip = 2.0 * gradient * 2f64.powi(dim as i32 + 1) * scale;
        Ok(KernelSpec::Smooth(SmoothKernel {
            d: dim,
            name: if dim == 1 && component == 1 && scale == 1.0 {
                "smooth-dini".into()
            } else {
                format!("smooth-dini(d={dim},c={component},s={scale})")
            },
            kernel: Arc::new(move |x: &[f64]| {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                let r = r2.sqrt();
                Complex64::new(scale * x[c] / r.powi(dim as i32 + 1), 0.0)
            }),
            size_const: scale,
            modulus: ModulusOfContinuity::linear(lip),
        }))
    }

    /// Registry lookup: `odd1d`, `beurling:m`, `smooth-dini`, `smooth-dini:d2`.
    ///
    /// A spec-file variant is handled by callers that read the file and use
    /// [`SmoothDiniParams::parse`].
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "odd1d" => Ok(Self::odd1d()),
            "smooth-dini" => Self::smooth_dini(SmoothDiniParams::default()),
            "smooth-dini:d2" => Self::smooth_dini(SmoothDiniParams {
                dim: 2,
                ..Default::default()
            }),
            _ => {
                if let Some(m) = name.strip_prefix("beurling:") {
                    let m = m
                        .parse()
                        .map_err(|_| Error::InvalidInput(format!("bad Beurling power in '{name}'")))?;
                    Self::beurling(m)
                } else {
                    invalid(format!("unknown kernel '{name}'"))
                }
            }
        }
    }

    pub fn d(&self) -> usize {
        match self {
            KernelSpec::Rough(k) => k.d,
            KernelSpec::Smooth(k) => k.d,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            KernelSpec::Rough(k) => &k.name,
            KernelSpec::Smooth(k) => &k.name,
        }
    }

    pub fn is_rough(&self) -> bool {
        matches!(self, KernelSpec::Rough(_))
    }

    /// `C_K`: `‖Ω‖_∞` for rough kernels.
    pub fn size_const(&self) -> f64 {
        match self {
            KernelSpec::Rough(k) => k.omega_sup,
            KernelSpec::Smooth(k) => k.size_const,
        }
    }

    /// `‖ω‖_Dini`; rough kernels have none.
    pub fn dini_norm(&self) -> Option<f64> {
        match self {
            KernelSpec::Rough(_) => None,
            KernelSpec::Smooth(k) => Some(k.modulus.dini_norm),
        }
    }

    /// Pointwise value at `x ≠ 0`.
    pub fn eval(&self, x: &[f64]) -> Complex64 {
        match self {
            KernelSpec::Rough(k) => {
                let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let u: Vec<f64> = x.iter().map(|v| v / r).collect();
                (k.omega)(&u) / r.powi(k.d as i32)
            }
            KernelSpec::Smooth(k) => (k.kernel)(x),
        }
    }

    /// Mean-zero (to 1e-8) and sup bounds for rough kernels, size bound for smooth ones.
    pub fn check_invariants(&self) -> Result<()> {
        match self {
            KernelSpec::Rough(k) => {
                let (mean, sup) = if k.d == 1 {
                    let (a, b) = ((k.omega)(&[1.0]), (k.omega)(&[-1.0]));
                    (a + b, a.norm().max(b.norm()))
                } else {
                    let m = 4096;
                    let vals: Vec<Complex64> = (0..m)
                        .map(|i| {
                            let t = 2.0 * PI * i as f64 / m as f64;
                            (k.omega)(&[t.cos(), t.sin()])
                        })
                        .collect();
                    let mean = vals.iter().sum::<Complex64>() * (2.0 * PI / m as f64);
                    (mean, vals.iter().map(|v| v.norm()).fold(0.0, f64::max))
                };
                if mean.norm() > 1e-8 {
                    return invalid(format!("Ω has nonzero mean {}", mean.norm()));
                }
                if sup > k.omega_sup * (1.0 + 1e-12) {
                    return invalid("sampled |Ω| exceeds the declared bound");
                }
                Ok(())
            }
            KernelSpec::Smooth(k) => {
                for i in 1..200 {
                    let r = 2f64.powf(-8.0 + 0.1 * i as f64);
                    let t = i as f64 * 0.7;
                    let x: Vec<f64> = if k.d == 1 {
                        vec![if i % 2 == 0 { r } else { -r }]
                    } else {
                        vec![r * t.cos(), r * t.sin()]
                    };
                    if (k.kernel)(&x).norm() > k.size_const / r.powi(k.d as i32) * (1.0 + 1e-12) {
                        return invalid("kernel violates its size bound");
                    }
                }
                k.modulus.check()
            }
        }
    }
}

/// Strictly increasing geometric ladder `ε_min·ρ^j ≤ r_max`.
#[derive(Clone, Debug, PartialEq)]
pub struct RadiiSet {
    radii: Vec<f64>,
    pub rho: f64,
}

impl RadiiSet {
    pub fn geometric(eps_min: f64, rho: f64, r_max: f64) -> Result<Self> {
        if !(rho > 1.0 && rho <= 2.0) {
            return invalid("ladder ratio must lie in (1, 2]");
        }
        if !(eps_min > 0.0 && eps_min < r_max) {
            return invalid("ladder needs 0 < eps_min < r_max");
        }
        let mut radii = vec![];
        let mut j = 0;
        loop {
            let r = eps_min * rho.powi(j);
            if r > r_max * (1.0 + 1e-12) {
                break;
            }
            radii.push(r);
            j += 1;
        }
        Ok(RadiiSet { radii, rho })
    }

    /// The default ladder for a grid: from one cell diagonal to the diameter, `ρ = 2^{1/4}`.
    pub fn for_grid(grid: &crate::grid::Grid) -> Self {
        Self::geometric(grid.cell_diagonal(), 2f64.powf(0.25), grid.diameter()).expect("valid ladder")
    }

    pub fn from_radii(radii: Vec<f64>) -> Result<Self> {
        if radii.is_empty() || radii.windows(2).any(|w| !(w[0] < w[1])) || radii[0] <= 0.0 {
            return invalid("radii must be positive and strictly increasing");
        }
        let rho = if radii.len() > 1 { radii[1] / radii[0] } else { 2.0 };
        Ok(RadiiSet { radii, rho })
    }

    /// Halves the ratio exponent; the old ladder is a subset of the new one.
    pub fn refined(&self) -> Self {
        let rho = self.rho.sqrt();
        let mut radii = Vec::with_capacity(2 * self.radii.len());
        for (i, r) in self.radii.iter().enumerate() {
            radii.push(*r);
            if i + 1 < self.radii.len() {
                radii.push(r * rho);
            }
        }
        RadiiSet { radii, rho }
    }

    pub fn check_resolution(&self, grid: &crate::grid::Grid) -> Result<()> {
        if self.radii[0] < grid.cell_diagonal() * (1.0 - 1e-12) {
            return Err(Error::InvalidResolution(format!(
                "smallest radius {} below the cell diagonal {}",
                self.radii[0],
                grid.cell_diagonal()
            )));
        }
        Ok(())
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beurling_kernel_matches_cartesian_form() {
        let k = KernelSpec::beurling(1).unwrap();
        for &(x, y) in &[(0.3, 0.4), (-1.2, 0.1), (0.05, -2.0)] {
            let z = Complex64::new(x, y);
            let want = -1.0 / (PI * z * z);
            assert!((k.eval(&[x, y]) - want).norm() < 1e-12 * want.norm());
        }
        assert!(k.check_invariants().is_ok());
        assert!(k.size_const() <= 1.0);
        for m in 1..6 {
            let k = KernelSpec::beurling(m).unwrap();
            assert_eq!(k.size_const(), m as f64 / PI);
            k.check_invariants().unwrap();
        }
    }

    #[test]
    fn smooth_kernel_constants() {
        let k = KernelSpec::smooth_dini(SmoothDiniParams::default()).unwrap();
        assert_eq!(k.dini_norm(), Some(8.0));
        k.check_invariants().unwrap();
        let k2 = KernelSpec::from_name("smooth-dini:d2").unwrap();
        assert_eq!(k2.dini_norm(), Some(32.0));
        k2.check_invariants().unwrap();
        // the declared modulus dominates the smoothness quotient
        if let KernelSpec::Smooth(s) = &k2 {
            for i in 0..500 {
                let t = i as f64 * 0.37;
                let x = [t.cos(), t.sin()];
                let dx = [0.49 * (1.3 * t).cos(), 0.49 * (1.3 * t).sin()];
                let xp = [x[0] + dx[0], x[1] + dx[1]];
                let lhs = 2.0 * ((s.kernel)(&x) - (s.kernel)(&xp)).norm();
                assert!(lhs <= s.modulus.eval(0.49));
            }
        }
    }

    #[test]
    fn params_parse() {
        let p = SmoothDiniParams::parse("dim = 2\ncomponent=2 # second\nscale=0.5\n").unwrap();
        assert_eq!(p, SmoothDiniParams { dim: 2, component: 2, scale: 0.5 });
        assert!(SmoothDiniParams::parse("dim=3").is_err());
        assert!(SmoothDiniParams::parse("colour=red").is_err());
    }

    #[test]
    fn modulus_checks() {
        let m = ModulusOfContinuity::new(Arc::new(|t: f64| t.min(1.0))).unwrap();
        assert!((m.dini_norm - 1.0).abs() < 1e-9);
        assert!(ModulusOfContinuity::new(Arc::new(|t: f64| t * t)).is_err());
    }

    #[test]
    fn registry_and_rough_profiles() {
        assert!(KernelSpec::from_name("beurling:x").is_err());
        assert!(KernelSpec::from_name("nope").is_err());
        assert_eq!(KernelSpec::from_name("beurling:3").unwrap().name(), "beurling:3");
        let k = KernelSpec::rough_from_angle("cos2", Arc::new(|t: f64| Complex64::new((2.0 * t).cos(), 0.0))).unwrap();
        if let KernelSpec::Rough(r) = &k {
            assert_eq!(r.modes.len(), 2);
        }
        assert!(KernelSpec::rough_from_angle("bad", Arc::new(|_| Complex64::new(1.0, 0.0))).is_err());
    }

    #[test]
    fn ladders() {
        let r = RadiiSet::geometric(1.0, 2.0, 8.0).unwrap();
        assert_eq!(r.radii(), &[1.0, 2.0, 4.0, 8.0]);
        let f = r.refined();
        assert_eq!(f.len(), 7);
        assert!(r.radii().iter().all(|x| f.radii().contains(x)));
        assert!(RadiiSet::geometric(1.0, 3.0, 8.0).is_err());
    }
}
