//! Subcommand drivers. Each writes its artifacts and returns its criteria.

pub mod appendix;
pub mod decompose;
pub mod geometry;
pub mod norms;
pub mod sparse;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use sdlab_core::calibration::calibrate as recalibrate;
use sdlab_core::error::Error;
use sdlab_core::grid::{Grid, GridFunction};
use sdlab_core::normlab::{certified_l2_norm, OperatorHandle, PowerConfig};
use sdlab_core::operators::kernel::{KernelSpec, RadiiSet};
use sdlab_core::weights::{power_weight, CubeFamily, Weight};

use crate::artifacts::{check, Artifacts};
use crate::config::RunConfig;
use crate::{Failure, Outcome};

/// The configured power family on the configured grid.
pub fn power_family(cfg: &RunConfig) -> Result<(CubeFamily, Vec<(f64, Weight)>), Failure> {
    let ws = cfg
        .deltas
        .iter()
        .map(|&t| Ok((t, power_weight(t, cfg.grid)?)))
        .collect::<Result<Vec<_>, Error>>()?;
    Ok((CubeFamily::dyadic(cfg.grid)?, ws))
}

pub fn beurling_power(cfg: &RunConfig) -> Option<u32> {
    cfg.kernel_name.strip_prefix("beurling:").and_then(|m| m.parse().ok())
}

/// Beurling powers act as Fourier multipliers; every other kernel is truncated at `eps_min`.
pub fn operator(cfg: &RunConfig) -> Result<OperatorHandle, Failure> {
    Ok(match beurling_power(cfg) {
        Some(m) => OperatorHandle::beurling(cfg.grid, m, cfg.calibration.beurling_convention)?,
        None => OperatorHandle::truncated(&cfg.kernel, cfg.grid, cfg.eps_min)?,
    })
}

pub fn ladder(cfg: &RunConfig, grid: &Grid) -> Result<RadiiSet, Failure> {
    let r = RadiiSet::geometric(cfg.eps_min.max(grid.cell_diagonal()), cfg.rho, cfg.r_max)?;
    r.check_resolution(grid)?;
    Ok(r)
}

/// `‖T_{ε,∞}‖_{L²→L²}`; a stalled iteration contributes the upper end of its bracket.
pub fn unweighted_norm(kernel: &KernelSpec, grid: Grid, eps: f64, power: &PowerConfig) -> Result<f64, Failure> {
    let op = OperatorHandle::truncated(kernel, grid, eps)?;
    match certified_l2_norm(&op, &Weight::new(grid, vec![1.0; grid.len()])?, power) {
        Ok(e) => Ok(e.value),
        Err(Error::NonConvergence { upper, .. }) => Ok(upper),
        Err(e) => Err(e.into()),
    }
}

/// Uniform random values on the cells of a `base`-per-side grid, zero outside
/// the ball of radius `r` about the origin (shrunk by one coarse diagonal).
pub fn coarse_random(d: usize, base: usize, side: f64, r: f64, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, Failure> {
    let bg = Grid::new(d, base, side)?;
    Ok((0..bg.len())
        .map(|i| {
            let v = rng.gen::<f64>();
            let p = bg.point(i);
            let inside = p.iter().map(|a| a * a).sum::<f64>().sqrt() < r - bg.cell_diagonal();
            if inside {
                v
            } else {
                0.0
            }
        })
        .collect())
}

/// Piecewise-constant extension of coarse cell values to `grid`.
pub fn refine(grid: Grid, base: usize, vals: &[f64]) -> Result<GridFunction, Failure> {
    let bg = Grid::new(grid.d, base, grid.side)?;
    Ok(GridFunction::from_fn(grid, |x| {
        let mut idx = [0usize; 2];
        for a in 0..grid.d {
            idx[a] = bg.nearest_index(x[a]);
        }
        Complex64::new(vals[bg.flatten(idx)], 0.0)
    }))
}

pub fn calibrate(cfg: &RunConfig, art: &mut Artifacts) -> Outcome {
    let fresh = recalibrate()?;
    art.text("calibration.txt", &fresh.to_text())?;
    let loaded = &cfg.calibration;
    let pairs = [
        ("reverse_holder_c", fresh.reverse_holder_c, loaded.reverse_holder_c),
        ("ainf_rhi_const", fresh.ainf_rhi_const, loaded.ainf_rhi_const),
        ("bump_const", fresh.bump_const, loaded.bump_const),
        ("piece_const", fresh.piece_const, loaded.piece_const),
        ("decay_alpha", fresh.decay_alpha, loaded.decay_alpha),
        ("a2_smooth_const", fresh.a2_smooth_const, loaded.a2_smooth_const),
        ("a2_rough_const", fresh.a2_rough_const, loaded.a2_rough_const),
    ];
    let drift: Vec<&str> = pairs
        .iter()
        .filter(|(_, a, b)| (a - b).abs() > 1e-6 * b.abs())
        .map(|(k, _, _)| *k)
        .collect();
    let same_convention = fresh.beurling_convention == loaded.beurling_convention;
    let checks = vec![check(
        "reproduces loaded calibration",
        drift.is_empty() && same_convention,
        if drift.is_empty() && same_convention {
            "all constants agree to 1e-6".to_string()
        } else {
            format!("differs in: {} convention same: {same_convention}", drift.join(", "))
        },
    )];
    let results = json!({ "fresh": fresh, "loaded": loaded });
    art.summary("calibrate", cfg, &checks, results)?;
    Ok(checks)
}
