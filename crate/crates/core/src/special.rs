//! Special functions and quadrature rules.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// A fixed Gauss–Legendre rule mapped onto arbitrary intervals.
#[derive(Clone, Debug)]
pub struct GaussRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(n: usize) -> Self {
        let (nodes, weights) = gauss_legendre(n);
        GaussRule { nodes, weights }
    }

    pub fn integrate<T>(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> T) -> T
    where
        T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T> + Default,
    {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        let mut acc = T::default();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc = acc + f(c + h * x) * (w * h);
        }
        acc
    }
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Hankel's expansion of `J_ν(x)` for large `x`.
fn bessel_j_large(nu: usize, x: f64) -> f64 {
    let mu = 4.0 * (nu * nu) as f64;
    let (mut p, mut q) = (1.0, 0.0);
    let mut term = 1.0;
    for k in 1..40 {
        let odd = (2 * k - 1) as f64;
        term *= (mu - odd * odd) / (k as f64 * 8.0 * x);
        if term.abs() < 1e-17 {
            break;
        }
        // terms alternate between Q (odd k) and P (even k) with signs + - - + ...
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
    }
    let chi = x - (0.5 * nu as f64 + 0.25) * std::f64::consts::PI;
    (2.0 / (std::f64::consts::PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// `J_0(x), …, J_nmax(x)`, `x ≥ 0`: Hankel's expansion and upward recurrence
/// for large `x`, Miller's backward recurrence otherwise.
pub fn bessel_j_all(nmax: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; nmax + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    if x >= 25.0 && x as usize > nmax {
        out[0] = bessel_j_large(0, x);
        if nmax >= 1 {
            out[1] = bessel_j_large(1, x);
        }
        for k in 1..nmax {
            out[k + 1] = 2.0 * k as f64 / x * out[k] - out[k - 1];
        }
        return out;
    }
    let top = nmax.max(x as usize);
    let mut start = top + 20 + (40.0 * top as f64).sqrt() as usize;
    start += start % 2;
    let (mut jp1, mut j) = (0.0f64, 1e-300f64);
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let jm1 = 2.0 * k as f64 / x * j - jp1;
        jp1 = j;
        j = jm1;
        if j.abs() > 1e250 {
            // rescale everything accumulated so far
            j *= 1e-250;
            jp1 *= 1e-250;
            norm *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
        let order = k - 1;
        if order <= nmax {
            out[order] = j;
        }
        if order % 2 == 0 && order > 0 {
            norm += 2.0 * j;
        }
    }
    norm += j;
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

pub fn bessel_j0(x: f64) -> f64 {
    bessel_j_all(0, x.abs())[0]
}

/// `1 - J_0(x)` without cancellation near 0.
pub fn one_minus_j0(x: f64) -> f64 {
    let x = x.abs();
    if x < 1.0 {
        let q = 0.25 * x * x;
        let (mut term, mut sum) = (1.0, 0.0);
        for k in 1..30 {
            term *= -q / (k * k) as f64;
            sum -= term;
            if term.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        1.0 - bessel_j0(x)
    }
}

/// `∫_0^x J_n(s)/s ds` for integer `n ≠ 0`, `x ≥ 0`.
pub fn bessel_over_s_integral(n: i32, x: f64) -> f64 {
    assert!(n != 0);
    let sign = if n < 0 && n % 2 != 0 { -1.0 } else { 1.0 };
    let n = n.unsigned_abs() as usize;
    if x == 0.0 {
        return 0.0;
    }
    let j = bessel_j_all(n, x);
    // A_m = ∫_0^x J_m, A_{m+1} = A_{m-1} - 2J_m, and ∫ J_n/s = (A_{n-1} - J_n)/n
    let a_nm1 = if n % 2 == 0 {
        let mut a = one_minus_j0(x);
        for i in 1..n / 2 {
            a -= 2.0 * j[2 * i];
        }
        a
    } else {
        let mut a = integral_j0(x);
        for i in 0..(n - 1) / 2 {
            a -= 2.0 * j[2 * i + 1];
        }
        a
    };
    sign * (a_nm1 - j[n]) / n as f64
}

/// `∫_0^x J_0(s) ds`, panelled Gauss–Legendre below 60 and the Struve
/// asymptotics above.
pub fn integral_j0(x: f64) -> f64 {
    if x.abs() >= 60.0 {
        let t = x.abs();
        let j = bessel_j_all(1, t);
        let (mut a, mut b) = (0.0, 0.0);
        let mut c = 1.0f64;
        for k in 0..9 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            if k > 0 {
                c *= ((2 * k - 1) * (2 * k - 1)) as f64;
                b -= sign * c / (2 * k - 1) as f64 / t.powi(2 * k - 1);
            }
            a += sign * c / t.powi(2 * k);
        }
        return x.signum() * (1.0 + j[1] * a - j[0] * b);
    }
    let rule = GaussRule::new(16);
    let panels = (x.abs().ceil() as usize).max(1);
    let h = x / panels as f64;
    (0..panels)
        .map(|p| rule.integrate(p as f64 * h, (p + 1) as f64 * h, bessel_j0))
        .sum()
}

/// Sine integral `Si(x) = ∫_0^x sin(t)/t dt`.
pub fn sine_integral(x: f64) -> f64 {
    let t = x.abs();
    let value = if t < 2.0 {
        let (mut term, mut sum) = (t, t);
        let x2 = t * t;
        for k in 1..40 {
            term *= -x2 / ((2 * k) * (2 * k + 1)) as f64;
            let add = term / (2 * k + 1) as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        sum
    } else {
        // E_1(i t) by modified Lentz continued fraction, Si = π/2 + Im E_1(it)
        use num_complex::Complex64;
        let one = Complex64::new(1.0, 0.0);
        let mut b = Complex64::new(1.0, t);
        let mut c = Complex64::new(1e300, 0.0);
        let mut d = one / b;
        let mut h = d;
        for i in 1..200 {
            let a = -((i * i) as f64);
            b += 2.0;
            d = one / (d * a + b);
            c = b + c.inv() * a;
            let del = c * d;
            h *= del;
            if (del - one).norm() < 1e-16 {
                break;
            }
        }
        let e1 = h * Complex64::new(t.cos(), -t.sin());
        0.5 * PI + e1.im
    };
    value.copysign(x)
}
