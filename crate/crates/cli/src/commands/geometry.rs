//! `grid-check` and `weights`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use sdlab_core::dyadic::{cover_ball, cover_ball_within, DyadicCube, LevelWindow};
use sdlab_core::error::Error;
use sdlab_core::weights::{characteristics, conjugate, Weight};

use super::power_family;
use crate::artifacts::{check, num, Artifacts};
use crate::config::RunConfig;
use crate::{Failure, Outcome};

#[derive(Default)]
struct Tally {
    trials: usize,
    failures: usize,
    min_ratio: f64,
    max_ratio: f64,
}

impl Tally {
    fn add(&mut self, ok: bool, side_over_r: f64) {
        if self.trials == 0 {
            self.min_ratio = side_over_r;
            self.max_ratio = side_over_r;
        }
        self.trials += 1;
        self.failures += usize::from(!ok);
        self.min_ratio = self.min_ratio.min(side_over_r);
        self.max_ratio = self.max_ratio.max(side_over_r);
    }
}

/// Internal defects abort the run; anything else counts as a failed trial.
fn found(r: Result<DyadicCube, Error>) -> Result<Option<DyadicCube>, Failure> {
    match r {
        Ok(q) => Ok(Some(q)),
        Err(e @ Error::Internal(_)) => Err(e.into()),
        Err(_) => Ok(None),
    }
}

pub fn grid_check(cfg: &RunConfig, art: &mut Artifacts) -> Outcome {
    let d = cfg.grid.d;
    let l = cfg.grid.side;
    let window = LevelWindow::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut cover, mut within) = (Tally::default(), Tally::default());
    let mut failures = Vec::new();
    for trial in 0..cfg.trials {
        let c: Vec<f64> = (0..d).map(|_| l * rng.gen_range(-0.5..0.5)).collect();
        let r = l * 10f64.powf(rng.gen_range(-4.0..-0.5));
        let ok = match found(cover_ball(&c, r, &window))? {
            Some(q) => {
                let s = q.side();
                let ok = q.contains_ball(&c, r) && 6.0 * r < s && s <= 12.0 * r;
                cover.add(ok, s / r);
                ok
            }
            None => {
                cover.add(false, f64::NAN);
                false
            }
        };
        if !ok {
            failures.push(vec![trial.to_string(), "cover_ball".into(), format!("{c:?}"), num(r)]);
        }

        let alpha: Vec<u8> = (0..d).map(|_| rng.gen_range(0..3)).collect();
        let level = rng.gen_range(0..5);
        let index: Vec<i64> = (0..d).map(|_| rng.gen_range(-(1i64 << level)..(1i64 << level))).collect();
        let q0 = DyadicCube::new(alpha, level, index)?;
        let b = q0.bounds();
        let c: Vec<f64> = (0..d).map(|i| rng.gen_range(b.lower[i]..b.upper[i])).collect();
        let room = (0..d)
            .map(|i| (c[i] - b.lower[i]).min(b.upper[i] - c[i]))
            .fold(f64::INFINITY, f64::min);
        let r = room * rng.gen_range(0.001..0.999);
        if !(r > 0.0 && q0.contains_ball(&c, r)) {
            continue;
        }
        let ok = match found(cover_ball_within(&q0, &c, r, &window))? {
            Some(q) => {
                let s = q.side();
                let ok = q.contains_ball(&c, r) && q.is_subset_of(&q0) && (s <= 12.0 * r || q == q0);
                within.add(ok, s / r);
                ok
            }
            None => {
                within.add(false, f64::NAN);
                false
            }
        };
        if !ok {
            failures.push(vec![trial.to_string(), "cover_ball_within".into(), format!("{c:?}"), num(r)]);
        }
    }
    let rows: Vec<Vec<String>> = [("cover_ball", &cover), ("cover_ball_within", &within)]
        .iter()
        .map(|(name, t)| {
            vec![
                d.to_string(),
                name.to_string(),
                t.trials.to_string(),
                t.failures.to_string(),
                num(t.min_ratio),
                num(t.max_ratio),
            ]
        })
        .collect();
    art.csv(
        "grid_check.csv",
        &["d", "lemma", "trials", "failures", "min_side_over_radius", "max_side_over_radius"],
        &rows,
    )?;
    art.csv("grid_check_failures.csv", &["trial", "lemma", "center", "radius"], &failures)?;
    let checks = vec![
        check(
            "cover_ball",
            cover.failures == 0,
            format!("{} of {} trials failed, side/r in [{:.3}, {:.3}]", cover.failures, cover.trials, cover.min_ratio, cover.max_ratio),
        ),
        check(
            "cover_ball_within",
            within.failures == 0,
            format!("{} of {} trials failed", within.failures, within.trials),
        ),
    ];
    let results = json!({
        "cover_ball": { "trials": cover.trials, "failures": cover.failures },
        "cover_ball_within": { "trials": within.trials, "failures": within.failures },
    });
    art.summary("grid-check", cfg, &checks, results)?;
    Ok(checks)
}

/// `sup ⟨w⟩_Q ⟨σ⟩_Q^{p-1}`, `σ = w^{1-p'}`, over every interval (d = 1) or
/// every axis-parallel square of cells (d = 2), by prefix sums.
pub fn all_cubes_ap(w: &Weight, p: f64) -> f64 {
    let g = w.grid;
    let n = g.n;
    let e = 1.0 - conjugate(p);
    let v = w.values();
    if g.d == 1 {
        let mut pw = vec![0.0; n + 1];
        let mut ps = vec![0.0; n + 1];
        for i in 0..n {
            pw[i + 1] = pw[i] + v[i];
            ps[i + 1] = ps[i] + v[i].powf(e);
        }
        let mut best = 0.0f64;
        for a in 0..n {
            for b in a + 1..=n {
                let len = (b - a) as f64;
                best = best.max((pw[b] - pw[a]) / len * ((ps[b] - ps[a]) / len).powf(p - 1.0));
            }
        }
        return best;
    }
    let m = n + 1;
    let mut pw = vec![0.0; m * m];
    let mut ps = vec![0.0; m * m];
    for i in 0..n {
        for j in 0..n {
            let x = v[g.flatten([i, j])];
            pw[(i + 1) * m + j + 1] = x + pw[i * m + j + 1] + pw[(i + 1) * m + j] - pw[i * m + j];
            ps[(i + 1) * m + j + 1] = x.powf(e) + ps[i * m + j + 1] + ps[(i + 1) * m + j] - ps[i * m + j];
        }
    }
    let rect = |t: &[f64], i0: usize, j0: usize, k: usize| {
        t[(i0 + k) * m + j0 + k] - t[i0 * m + j0 + k] - t[(i0 + k) * m + j0] + t[i0 * m + j0]
    };
    let mut best = 0.0f64;
    for k in 1..=n {
        let area = (k * k) as f64;
        for i0 in 0..=n - k {
            for j0 in 0..=n - k {
                let aw = rect(&pw, i0, j0, k) / area;
                let asg = rect(&ps, i0, j0, k) / area;
                best = best.max(aw * asg.powf(p - 1.0));
            }
        }
    }
    best
}

pub fn weights(cfg: &RunConfig, art: &mut Artifacts) -> Outcome {
    let (fam, ws) = power_family(cfg)?;
    let mut rows = Vec::new();
    let mut oracle_rows = Vec::new();
    let mut worst: f64 = 0.0;
    let mut table = Vec::new();
    for (delta, w) in &ws {
        let ch = characteristics(w, cfg.p, &fam)?;
        let brute = all_cubes_ap(w, cfg.p);
        let gap = (ch.ap - brute).abs() / brute;
        worst = worst.max(gap);
        rows.push(vec![num(*delta), num(ch.ap), num(ch.ainf), num(ch.dual_ainf), num(ch.braces), num(ch.parens)]);
        oracle_rows.push(vec![num(*delta), num(ch.ap), num(brute), num(gap)]);
        table.push(json!({ "delta": delta, "characteristics": ch, "ap_all_cubes": brute, "relative_gap": gap }));
    }
    art.csv("weights.csv", &["delta", "ap", "ainf", "dual_ainf", "braces", "parens"], &rows)?;
    art.csv("weights_oracle.csv", &["delta", "ap_dyadic", "ap_all_cubes", "relative_gap"], &oracle_rows)?;
    let checks = vec![check(
        "A_p oracle agreement",
        worst <= cfg.oracle_tol,
        format!("largest relative gap {:.3}% against {:.3}%", 100.0 * worst, 100.0 * cfg.oracle_tol),
    )];
    art.summary("weights", cfg, &checks, json!({ "rows": table }))?;
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sdlab_core::grid::Grid;

    #[test]
    fn all_cubes_oracle_on_small_weights() {
        let g = Grid::new(1, 4, 1.0).unwrap();
        let w = Weight::new(g, vec![1.0, 4.0, 1.0, 1.0]).unwrap();
        // the single cell and the pair [1, 4] give 1 and (5/2)(5/8) = 25/16
        assert!((all_cubes_ap(&w, 2.0) - 25.0 / 16.0).abs() < 1e-12);
        let g2 = Grid::new(2, 2, 1.0).unwrap();
        let w2 = Weight::new(g2, vec![1.0, 1.0, 1.0, 9.0]).unwrap();
        // whole square: (12/4)(28/9/4) = 7/3
        assert!((all_cubes_ap(&w2, 2.0) - 7.0 / 3.0).abs() < 1e-12);
        let flat = Weight::new(g2, vec![2.0; 4]).unwrap();
        assert!((all_cubes_ap(&flat, 3.0) - 1.0).abs() < 1e-12);
    }
}
