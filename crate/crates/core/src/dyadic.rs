//! Adjacent dyadic systems.
//!
//! A cube of `D^α` at level `k` with index `m` is
//! `2^{-k}([0,1)^d + m + (-1)^k α/3)`. Every bound is a rational of the form
//! `integer / (3·2^k)`, so all geometric predicates here are decided exactly:
//! cube against cube with `i128` numerators over a common denominator
//! `3·2^SCALE_EXP`, and cube against `f64` data with big rationals.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Finest level representable with `i128` numerators.
pub const SCALE_EXP: i32 = 60;
/// Coarsest level accepted anywhere.
pub const COARSEST_LEVEL: i32 = -40;

/// Admissible range of levels for an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelWindow {
    pub min: i32,
    pub max: i32,
}

impl Default for LevelWindow {
    fn default() -> Self {
        LevelWindow {
            min: COARSEST_LEVEL,
            max: SCALE_EXP,
        }
    }
}

impl LevelWindow {
    pub fn new(min: i32, max: i32) -> Result<Self> {
        if min > max || min < COARSEST_LEVEL || max > SCALE_EXP {
            return invalid(format!(
                "level window [{min}, {max}] must be ordered and inside [{COARSEST_LEVEL}, {SCALE_EXP}]"
            ));
        }
        Ok(LevelWindow { min, max })
    }

    pub fn check(&self, level: i32) -> Result<()> {
        if level < self.min || level > self.max {
            Err(Error::LevelOutOfWindow {
                level,
                min: self.min,
                max: self.max,
            })
        } else {
            Ok(())
        }
    }
}

/// Half-open axis-parallel box `∏ [lower_i, upper_i)`.
///
/// Bounds are rounded to `f64`; use the cube predicates for exact questions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl AxisBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return invalid("box bounds must have equal, nonzero length");
        }
        if lower.iter().zip(&upper).any(|(a, b)| !(a < b)) {
            return invalid("box needs lower < upper in every coordinate");
        }
        Ok(AxisBox { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (a, b))| a <= x && x < b)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    pub alpha: Vec<u8>,
    pub level: i32,
    pub index: Vec<i64>,
}

pub(crate) fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite value")
}

fn pow2(k: i32) -> BigRational {
    let one = BigInt::one();
    if k >= 0 {
        BigRational::from_integer(one << k as usize)
    } else {
        BigRational::new(one.clone(), one << (-k) as usize)
    }
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        invalid(format!("{what} must be finite"))
    }
}

fn parity_sign(level: i32) -> i64 {
    if level.rem_euclid(2) == 0 {
        1
    } else {
        -1
    }
}

impl DyadicCube {
    pub fn new(alpha: Vec<u8>, level: i32, index: Vec<i64>) -> Result<Self> {
        if alpha.is_empty() || alpha.len() != index.len() {
            return invalid("alpha and index must have the same nonzero length");
        }
        if alpha.iter().any(|&a| a > 2) {
            return invalid("alpha entries must lie in {0,1,2}");
        }
        LevelWindow::default().check(level)?;
        Ok(DyadicCube {
            alpha,
            level,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn side(&self) -> f64 {
        2f64.powi(-self.level)
    }

    pub fn measure(&self) -> f64 {
        self.side().powi(self.dim() as i32)
    }

    /// `(-1)^level`, the orientation of the α/3 shift.
    pub fn sign(&self) -> i64 {
        parity_sign(self.level)
    }

    /// Lower bound of coordinate `i` as a numerator over `3·2^SCALE_EXP`.
    pub(crate) fn lower_num(&self, i: usize) -> i128 {
        let base = 3 * self.index[i] as i128 + (self.sign() * self.alpha[i] as i64) as i128;
        base.checked_mul(1i128 << (SCALE_EXP - self.level))
            .expect("cube coordinate exceeds exact range")
    }

    pub(crate) fn width_num(&self) -> i128 {
        3i128 << (SCALE_EXP - self.level)
    }

    pub fn lower_exact(&self, i: usize) -> BigRational {
        let base = 3 * self.index[i] + self.sign() * self.alpha[i] as i64;
        BigRational::from_integer(BigInt::from(base)) * pow2(-self.level) / BigInt::from(3)
    }

    pub fn upper_exact(&self, i: usize) -> BigRational {
        self.lower_exact(i) + pow2(-self.level)
    }

    pub fn bounds(&self) -> AxisBox {
        let denom = 3.0 * 2f64.powi(self.level);
        let mut lower = Vec::with_capacity(self.dim());
        let mut upper = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let base = (3 * self.index[i] + self.sign() * self.alpha[i] as i64) as f64;
            lower.push(base / denom);
            upper.push((base + 3.0) / denom);
        }
        AxisBox { lower, upper }
    }

    /// The `2^d` cubes one level down; same shift, union equal to `self`.
    pub fn children(&self) -> Vec<DyadicCube> {
        let d = self.dim();
        let s = self.sign();
        (0..1usize << d)
            .map(|bits| {
                let index = (0..d)
                    .map(|i| 2 * self.index[i] + s * self.alpha[i] as i64 + ((bits >> i) & 1) as i64)
                    .collect();
                DyadicCube {
                    alpha: self.alpha.clone(),
                    level: self.level + 1,
                    index,
                }
            })
            .collect()
    }

    pub fn parent(&self) -> DyadicCube {
        let s = parity_sign(self.level - 1);
        let index = (0..self.dim())
            .map(|i| (self.index[i] - s * self.alpha[i] as i64).div_euclid(2))
            .collect();
        DyadicCube {
            alpha: self.alpha.clone(),
            level: self.level - 1,
            index,
        }
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        assert_eq!(point.len(), self.dim(), "dimension mismatch");
        point.iter().enumerate().all(|(i, &x)| {
            let x = exact(x);
            self.lower_exact(i) <= x && x < self.upper_exact(i)
        })
    }

    /// Whether the open ball `B(center, radius)` lies in the cube.
    pub fn contains_ball(&self, center: &[f64], radius: f64) -> bool {
        let r = exact(radius);
        center.iter().enumerate().all(|(i, &c)| {
            let c = exact(c);
            self.lower_exact(i) <= &c - &r && &c + &r <= self.upper_exact(i)
        })
    }

    pub fn is_subset_of(&self, other: &DyadicCube) -> bool {
        (0..self.dim()).all(|i| {
            let (a, b) = (self.lower_num(i), other.lower_num(i));
            b <= a && a + self.width_num() <= b + other.width_num()
        })
    }

    pub fn intersects(&self, other: &DyadicCube) -> bool {
        (0..self.dim()).all(|i| {
            let (a, b) = (self.lower_num(i), other.lower_num(i));
            a < b + other.width_num() && b < a + self.width_num()
        })
    }

    /// Whether the concentric dilate `factor·self` lies in `other`.
    pub fn dilate_within(&self, factor: u32, other: &DyadicCube) -> bool {
        let w = self.width_num();
        let f = factor as i128;
        (0..self.dim()).all(|i| {
            // doubled coordinates keep the half-width integral
            let centre2 = 2 * self.lower_num(i) + w;
            let lo2 = centre2 - f * w;
            let hi2 = centre2 + f * w;
            let olo2 = 2 * other.lower_num(i);
            olo2 <= lo2 && hi2 <= olo2 + 2 * other.width_num()
        })
    }
}

fn level_for_radius(r: &BigRational, scale: &BigRational) -> i32 {
    // smallest j with scale·2^{-j} <= 12r, then 6r < scale·2^{-j} follows
    let twelve_r = r * BigInt::from(12);
    let ratio = (scale / &twelve_r).to_f64().unwrap_or(1.0);
    let mut j = ratio.log2().ceil() as i32;
    while scale * pow2(-j) > twelve_r {
        j += 1;
    }
    while scale * pow2(-(j - 1)) <= twelve_r {
        j -= 1;
    }
    j
}

/// Index of the level-`level` interval of `D^alpha` containing `t` (1D).
fn index_containing(t: &BigRational, level: i32, alpha: u8) -> BigInt {
    let s = parity_sign(level);
    let scaled = t * pow2(level) * BigInt::from(3) - BigRational::from_integer(BigInt::from(s * alpha as i64));
    (scaled / BigInt::from(3)).floor().to_integer()
}

fn interval(level: i32, alpha: u8, m: &BigInt) -> (BigRational, BigRational) {
    let s = parity_sign(level);
    let base = BigInt::from(3) * m + BigInt::from(s * alpha as i64);
    let lo = BigRational::from_integer(base) * pow2(-level) / BigInt::from(3);
    let hi = &lo + pow2(-level);
    (lo, hi)
}

fn to_index(m: BigInt) -> Result<i64> {
    m.to_i64()
        .ok_or_else(|| Error::InvalidInput("cube index overflows i64".into()))
}

/// Finds `Q` in some `D^α` with `B(center, radius) ⊆ Q` and `6r < ℓ(Q) ≤ 12r`.
///
/// Ties are resolved towards the lexicographically smallest `α`.
pub fn cover_ball(center: &[f64], radius: f64, window: &LevelWindow) -> Result<DyadicCube> {
    check_finite(center, "center")?;
    if center.is_empty() {
        return invalid("center must have at least one coordinate");
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return invalid("radius must be positive and finite");
    }
    let r = exact(radius);
    let level = level_for_radius(&r, &BigRational::one());
    window.check(level)?;
    let mut alpha = Vec::with_capacity(center.len());
    let mut index = Vec::with_capacity(center.len());
    for &c in center {
        let c = exact(c);
        let (lo, hi) = (&c - &r, &c + &r);
        let hit = (0u8..3).find_map(|a| {
            let m = index_containing(&lo, level, a);
            let (_, upper) = interval(level, a, &m);
            (hi <= upper).then_some((a, m))
        });
        let Some((a, m)) = hit else {
            return Err(Error::Internal(format!(
                "no adjacent dyadic interval at level {level} covers the ball"
            )));
        };
        alpha.push(a);
        index.push(to_index(m)?);
    }
    Ok(DyadicCube {
        alpha,
        level,
        index,
    })
}

/// Finds `Q` with `B(center, radius) ⊆ Q ⊆ q0` and `ℓ(Q) ≤ 12r`.
///
/// Returns `q0` itself when `12r ≥ ℓ(q0)`. Otherwise the result sits at the
/// level `j` below `q0` with `6r < 2^{-j}ℓ(q0) ≤ 12r`, possibly in another shift.
pub fn cover_ball_within(
    q0: &DyadicCube,
    center: &[f64],
    radius: f64,
    window: &LevelWindow,
) -> Result<DyadicCube> {
    check_finite(center, "center")?;
    if center.len() != q0.dim() {
        return invalid("center dimension differs from the cube");
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return invalid("radius must be positive and finite");
    }
    if !q0.contains_ball(center, radius) {
        return invalid("ball is not contained in q0");
    }
    let r = exact(radius);
    let side0 = pow2(-q0.level);
    if &r * BigInt::from(12) >= side0 {
        return Ok(q0.clone());
    }
    let level = q0.level + level_for_radius(&r, &side0);
    window.check(level)?;
    let mut alpha = Vec::with_capacity(center.len());
    let mut index = Vec::with_capacity(center.len());
    for (i, &c) in center.iter().enumerate() {
        let c = exact(c);
        let (lo, hi) = (&c - &r, &c + &r);
        let (q_lo, q_hi) = (q0.lower_exact(i), q0.upper_exact(i));
        let hit = (0u8..3).find_map(|a| {
            let m = index_containing(&lo, level, a);
            let (a_lo, a_hi) = interval(level, a, &m);
            (hi <= a_hi && q_lo <= a_lo && a_hi <= q_hi).then_some((a, m))
        });
        let Some((a, m)) = hit else {
            return Err(Error::Internal(format!(
                "no subinterval of q0 at level {level} covers the ball"
            )));
        };
        alpha.push(a);
        index.push(to_index(m)?);
    }
    Ok(DyadicCube {
        alpha,
        level,
        index,
    })
}

/// All cubes of one shift and level meeting the box, in index order.
pub fn cubes_meeting(bx: &AxisBox, alpha: &[u8], level: i32) -> Vec<DyadicCube> {
    let d = bx.dim();
    let s = parity_sign(level) as f64;
    let scale = 2f64.powi(level);
    let ranges: Vec<(i64, i64)> = (0..d)
        .map(|i| {
            let shift = s * alpha[i] as f64 / 3.0;
            let lo = (bx.lower[i] * scale - shift).floor() as i64 - 1;
            let hi = (bx.upper[i] * scale - shift).ceil() as i64 + 1;
            (lo, hi)
        })
        .collect();
    let mut out = Vec::new();
    let mut idx: Vec<i64> = ranges.iter().map(|r| r.0).collect();
    loop {
        let cube = DyadicCube {
            alpha: alpha.to_vec(),
            level,
            index: idx.clone(),
        };
        let b = cube.bounds();
        if (0..d).all(|i| b.lower[i] < bx.upper[i] && bx.lower[i] < b.upper[i]) {
            out.push(cube);
        }
        let mut i = 0;
        loop {
            if i == d {
                return out;
            }
            idx[i] += 1;
            if idx[i] <= ranges[i].1 {
                break;
            }
            idx[i] = ranges[i].0;
            i += 1;
        }
    }
}

/// Every shift vector in `{0,1,2}^d`, lexicographically.
pub fn all_shifts(d: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|v| {
                (0u8..3).map(move |a| {
                    let mut w = v.clone();
                    w.push(a);
                    w
                })
            })
            .collect();
    }
    out
}

/// Exact comparison of a cube side with a real length.
pub fn cmp_side(cube: &DyadicCube, length: f64) -> Ordering {
    pow2(-cube.level).cmp(&exact(length))
}
