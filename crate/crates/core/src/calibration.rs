//! Dimensional constants fitted once on the power-weight family and frozen.
//!
//! The frozen values live in `calibration.txt` next to the crate manifest, one
//! `key = value` per line. [`calibrate`] recomputes them from scratch.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::lpdecomp::{piece_decay_fit, Decomposition, Schedule};
use crate::normlab::{certified_l2_norm, OperatorHandle, PowerConfig};
use crate::operators::beurling::{pin_convention, BeurlingConvention};
use crate::operators::kernel::KernelSpec;
use crate::weights::{
    ainf_fujii_wilson, bump_corollaries_check, characteristics, power_weight, reverse_holder_bisect,
    reverse_holder_constant, rhi_to_ainf_bound, CubeFamily, Weight,
};

pub const FROZEN: &str = include_str!("../calibration.txt");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub version: u32,
    pub beurling_convention: BeurlingConvention,
    /// Smallest bisected `c` with the factor-2 reverse Hölder inequality at `δ = c/[w]_{A_∞}`.
    pub reverse_holder_c: f64,
    /// Largest `[w]_{A_∞} / (K r')`.
    pub ainf_rhi_const: f64,
    /// Largest bumped `A_∞` and mixed-characteristic ratio at `δ = c/(w)`.
    pub bump_const: f64,
    /// Largest `sup|m_j| / (1 + N(j))` for the first Beurling power, dyadic schedule.
    pub piece_const: f64,
    /// Decay rate of the pieces, `-slope` of `log2 sup|m_j|` against `N(j-1)`.
    pub decay_alpha: f64,
    /// Largest `‖T‖_{L²(w)} / [w]_{A_2}` for the smooth test kernel.
    pub a2_smooth_const: f64,
    /// Largest `‖B‖_{L²(w)} / [w]_{A_2}²`.
    pub a2_rough_const: f64,
}

/// `key = value` lines; `#` starts a comment.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return invalid(format!("line {}: expected key = value", no + 1));
        };
        let key = k.trim().to_string();
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return invalid(format!("line {}: duplicate key '{key}'", no + 1));
        }
    }
    Ok(out)
}

impl Calibration {
    pub fn frozen() -> Self {
        Self::parse(FROZEN).expect("the bundled calibration file parses")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let map = parse_key_values(text)?;
        let get = |k: &str| map.get(k).ok_or_else(|| Error::InvalidInput(format!("calibration lacks '{k}'")));
        let num = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| Error::InvalidInput(format!("calibration value '{k}' is not a number")))
        };
        let conv = get("beurling_convention")?;
        Ok(Calibration {
            version: get("version")?
                .parse()
                .map_err(|_| Error::InvalidInput("calibration version is not an integer".into()))?,
            beurling_convention: BeurlingConvention::parse(conv)
                .ok_or_else(|| Error::InvalidInput(format!("unknown Beurling convention '{conv}'")))?,
            reverse_holder_c: num("reverse_holder_c")?,
            ainf_rhi_const: num("ainf_rhi_const")?,
            bump_const: num("bump_const")?,
            piece_const: num("piece_const")?,
            decay_alpha: num("decay_alpha")?,
            a2_smooth_const: num("a2_smooth_const")?,
            a2_rough_const: num("a2_rough_const")?,
        })
    }

    pub fn to_text(&self) -> String {
        format!(
            "# dimensional constants, regenerate with `sdlab calibrate`\n\
             version = {}\n\
             beurling_convention = {}\n\
             reverse_holder_c = {:.9e}\n\
             ainf_rhi_const = {:.9e}\n\
             bump_const = {:.9e}\n\
             piece_const = {:.9e}\n\
             decay_alpha = {:.9e}\n\
             a2_smooth_const = {:.9e}\n\
             a2_rough_const = {:.9e}\n",
            self.version,
            self.beurling_convention.as_str(),
            self.reverse_holder_c,
            self.ainf_rhi_const,
            self.bump_const,
            self.piece_const,
            self.decay_alpha,
            self.a2_smooth_const,
            self.a2_rough_const,
        )
    }

    /// Exponent rate in the series `Σ (1 + N(j)) 2^{-α N(j-1)/Λ}`: interpolating
    /// with `ε = c/(2(w))` keeps the fraction `ε/(1+ε) ≥ c/((2 + c)(w))` of the
    /// unweighted decay.
    pub fn series_alpha(&self) -> f64 {
        self.decay_alpha * self.reverse_holder_c / (2.0 + self.reverse_holder_c)
    }
}

pub const POWERS_1D: [f64; 6] = [-0.75, -0.5, -0.25, 0.25, 0.5, 0.75];
pub const POWERS_2D: [f64; 6] = [-1.2, -0.8, -0.4, 0.4, 0.8, 1.2];

fn family(d: usize, n: usize) -> Result<(CubeFamily, Vec<Weight>)> {
    let g = Grid::new(d, n, 1.0)?;
    let deltas = if d == 1 { &POWERS_1D } else { &POWERS_2D };
    let ws = deltas.iter().map(|&t| power_weight(t, g)).collect::<Result<Vec<_>>>()?;
    Ok((CubeFamily::dyadic(g)?, ws))
}

/// Recomputes every constant on the fixed calibration grids.
pub fn calibrate() -> Result<Calibration> {
    let fams = [family(1, 256)?, family(2, 32)?];
    let mut rh_c = f64::INFINITY;
    let mut per_weight = Vec::new();
    for (fam, ws) in &fams {
        for w in ws {
            let ainf = ainf_fujii_wilson(w, fam)?;
            let c = reverse_holder_bisect(w, ainf, fam, 16.0, 1e-4)?;
            rh_c = rh_c.min(c);
            per_weight.push((fam, w, ainf, c));
        }
    }
    let mut ainf_rhi: f64 = 0.0;
    let mut bump: f64 = 0.0;
    for &(fam, w, ainf, c) in &per_weight {
        let r = 1.0 + c / ainf;
        let k = reverse_holder_constant(w, r, fam)?;
        ainf_rhi = ainf_rhi.max(ainf / rhi_to_ainf_bound(k, r)?);
        let parens = characteristics(w, 2.0, fam)?.parens;
        let rep = bump_corollaries_check(w, 2.0, rh_c / parens, fam, rh_c)?;
        bump = bump.max(rep.ainf_ratio).max(rep.braces_ratio);
    }

    let b1 = KernelSpec::beurling(1)?;
    let dec = Decomposition::new(&b1, Grid::new(2, 256, 1.0)?)?;
    let piece_const = (0..=4)
        .map(|j| Ok(dec.piece_l2_norm(&Schedule::Dyadic, j)? / (1.0 + Schedule::Dyadic.n(j)? as f64)))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let (_, fit) = piece_decay_fit(&dec, &Schedule::Dyadic, 6)?;

    let convention = pin_convention(Grid::new(2, 128, 1.0)?)?;
    let power = PowerConfig::default();
    let ratio_max = |op: &OperatorHandle, fam: &CubeFamily, ws: &[Weight], e: i32| -> Result<f64> {
        let mut best: f64 = 0.0;
        for w in ws {
            let ap = characteristics(w, 2.0, fam)?.ap;
            best = best.max(certified_l2_norm(op, w, &power)?.value / ap.powi(e));
        }
        Ok(best)
    };
    let g1 = fams[0].0.grid;
    let smooth = OperatorHandle::truncated(&KernelSpec::from_name("smooth-dini")?, g1, g1.cell_diagonal())?;
    let a2_smooth_const = ratio_max(&smooth, &fams[0].0, &fams[0].1, 1)?;
    let rough = OperatorHandle::beurling(fams[1].0.grid, 1, convention)?;
    let a2_rough_const = ratio_max(&rough, &fams[1].0, &fams[1].1, 2)?;

    Ok(Calibration {
        version: 1,
        beurling_convention: convention,
        reverse_holder_c: rh_c,
        ainf_rhi_const: ainf_rhi,
        bump_const: bump,
        piece_const,
        decay_alpha: -fit.slope,
        a2_smooth_const,
        a2_rough_const,
    })
}
