//! `cotlar` and `weak11`: constants on the grid and on its refinement.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use sdlab_core::grid::{Grid, GridFunction};
use sdlab_core::operators::appendix::{cotlar_check, spike, weak11_ratio};
use sdlab_core::operators::kernel::RadiiSet;

use super::{coarse_random, refine, unweighted_norm};
use crate::artifacts::{check, num, Artifacts, Check};
use crate::config::RunConfig;
use crate::{Failure, Outcome};

/// Coarse cells per side of the random test functions.
const BASE: usize = 64;

/// A spike, a centred box indicator and `tests` random functions, on `grid`.
fn test_functions(cfg: &RunConfig, grid: Grid, coarse: &[Vec<f64>]) -> Result<Vec<(String, GridFunction)>, Failure> {
    let l = grid.side;
    let mut at = vec![0.0; grid.d];
    at[0] = 0.1 * l;
    let mut out = vec![
        ("spike".to_string(), spike(grid, &at)),
        (
            "indicator".to_string(),
            GridFunction::from_fn(grid, |x| {
                let inside = x.iter().all(|c| c.abs() < l / 8.0);
                Complex64::new(if inside { 1.0 } else { 0.0 }, 0.0)
            }),
        ),
    ];
    for (i, v) in coarse.iter().enumerate() {
        out.push((format!("random{i}"), refine(grid, BASE.min(cfg.grid.n), v)?));
    }
    Ok(out)
}

fn grids(cfg: &RunConfig) -> Result<[Grid; 2], Failure> {
    let g = cfg.grid;
    Ok([g, Grid::new(g.d, 2 * g.n, g.side)?])
}

fn coarse(cfg: &RunConfig) -> Result<Vec<Vec<f64>>, Failure> {
    let g = cfg.grid;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.tests)
        .map(|_| coarse_random(g.d, BASE.min(g.n), g.side, g.side / 4.0, &mut rng))
        .collect()
}

fn stable(name: &str, sups: &[f64; 2], limit: f64) -> Check {
    let finite = sups.iter().all(|v| v.is_finite() && *v > 0.0);
    let drift = (sups[1] / sups[0]).max(sups[0] / sups[1]);
    check(
        name,
        finite && drift <= limit,
        format!("{:.4} → {:.4} under refinement (×{drift:.3}, limit ×{limit})", sups[0], sups[1]),
    )
}

pub fn cotlar(cfg: &RunConfig, art: &mut Artifacts) -> Outcome {
    if cfg.kernel.dini_norm().is_none() {
        return Err(Failure::Usage("kernel: the Cotlar check needs a smooth kernel".into()));
    }
    let coarse = coarse(cfg)?;
    let mut rows = Vec::new();
    let mut sups = [0.0f64; 2];
    let mut norms = [0.0f64; 2];
    for (level, g) in grids(cfg)?.into_iter().enumerate() {
        let radii = RadiiSet::for_grid(&g);
        let t_norm = unweighted_norm(&cfg.kernel, g, g.cell_diagonal(), &cfg.power())?;
        norms[level] = t_norm;
        for (name, f) in test_functions(cfg, g, &coarse)? {
            let c = cotlar_check(&cfg.kernel, &f, 0.5, t_norm, &radii)?;
            sups[level] = sups[level].max(c);
            rows.push(vec![g.n.to_string(), name, num(c)]);
        }
    }
    art.csv("cotlar.csv", &["n", "test", "constant"], &rows)?;
    let checks = vec![stable("Cotlar constant stable", &sups, cfg.stability)];
    let results = json!({ "sup": sups, "t_norm": norms, "delta_exponent": 0.5 });
    art.summary("cotlar", cfg, &checks, results)?;
    Ok(checks)
}

pub fn weak11(cfg: &RunConfig, art: &mut Artifacts) -> Outcome {
    let coarse = coarse(cfg)?;
    let mut rows = Vec::new();
    let mut sups = [0.0f64; 2];
    for (level, g) in grids(cfg)?.into_iter().enumerate() {
        for (name, f) in test_functions(cfg, g, &coarse)? {
            let r = weak11_ratio(&cfg.kernel, std::slice::from_ref(&f), g.cell_diagonal())?.ratio;
            sups[level] = sups[level].max(r);
            rows.push(vec![g.n.to_string(), name, num(r)]);
        }
    }
    art.csv("weak11.csv", &["n", "test", "ratio"], &rows)?;
    let checks = vec![stable("weak (1,1) ratio stable", &sups, cfg.stability)];
    art.summary("weak11", cfg, &checks, json!({ "sup": sups }))?;
    Ok(checks)
}
