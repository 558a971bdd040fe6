//! `decompose`: multiplier scaling, piece decay and piece kernel estimates.

use serde_json::json;

use sdlab_core::lpdecomp::{envelope_fit, piece_decay_fit, piece_kernel_estimates, Decomposition, EstimateSampling};
use sdlab_core::stats::proportional_fit;

use crate::artifacts::{check, num, Artifacts};
use crate::config::RunConfig;
use crate::Outcome;

pub fn decompose(cfg: &RunConfig, art: &mut Artifacts) -> Outcome {
    if cfg.j_max < 3 {
        return Err(crate::Failure::Usage("j_max: decompose needs at least 3 pieces".into()));
    }
    let dec = Decomposition::new(&cfg.kernel, cfg.grid)?;
    let scale_err = dec.scale_invariance_error()?;
    let env = envelope_fit(&dec)?;
    let (decay, fit) = piece_decay_fit(&dec, &cfg.schedule, cfg.j_max)?;
    let sampling = EstimateSampling {
        seed: cfg.seed,
        ..EstimateSampling::default()
    };
    // kernel estimates stop one piece short of the decay fit
    let est = (1..cfg.j_max)
        .map(|j| piece_kernel_estimates(&dec, &cfg.schedule, j, &sampling))
        .collect::<Result<Vec<_>, _>>()?;

    let rows: Vec<Vec<String>> = est
        .iter()
        .map(|e| {
            vec![
                e.j.to_string(),
                e.n_j.to_string(),
                num(e.l2_norm),
                num(e.size_const),
                num(e.dini),
                num(e.alpha_fit),
            ]
        })
        .collect();
    art.csv("pieces.csv", &["j", "N(j)", "l2_norm", "size_const", "dini", "alpha_fit"], &rows)?;
    let decay_rows: Vec<Vec<String>> = decay
        .iter()
        .enumerate()
        .map(|(i, (np, sup))| vec![(i + 1).to_string(), np.to_string(), num(*sup)])
        .collect();
    art.csv("decay.csv", &["j", "N(j-1)", "sup_multiplier"], &decay_rows)?;
    let env_rows: Vec<Vec<String>> = env.c_per_level.iter().map(|(k, c)| vec![k.to_string(), num(*c)]).collect();
    art.csv("envelope.csv", &["level", "envelope_const"], &env_rows)?;

    let sizes: Vec<f64> = est.iter().map(|e| e.size_const).collect();
    let (lo, hi) = sizes.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    let x: Vec<f64> = est.iter().map(|e| 1.0 + e.n_j as f64).collect();
    let y: Vec<f64> = est.iter().map(|e| e.dini).collect();
    let dini_fit = proportional_fit(&x, &y)?;

    let checks = vec![
        check(
            "scale invariance",
            scale_err <= cfg.scale_tol,
            format!("error {scale_err:.2e} against {:.0e}", cfg.scale_tol),
        ),
        check(
            "annulus envelope",
            env.alpha_low >= cfg.envelope_min && env.alpha_high >= cfg.envelope_min && env.violations < 0.01,
            format!(
                "exponents {:.3} / {:.3}, violations {:.4}",
                env.alpha_low, env.alpha_high, env.violations
            ),
        ),
        check(
            "piece decay",
            fit.slope <= cfg.decay_slope_max && fit.r2 >= cfg.r2_min,
            format!("slope {:.3}, R² {:.4}", fit.slope, fit.r2),
        ),
        check(
            "piece size constants",
            hi / lo <= cfg.size_spread_max,
            format!("spread ×{:.2}", hi / lo),
        ),
        check(
            "piece Dini growth",
            dini_fit.r2 >= cfg.r2_min,
            format!("Dini ≈ {:.3}(1+N(j)), R² {:.4}", dini_fit.slope, dini_fit.r2),
        ),
    ];
    let results = json!({
        "scale_invariance_error": scale_err,
        "envelope": env,
        "decay_fit": fit,
        "dini_fit": dini_fit,
        "pieces": est,
    });
    art.summary("decompose", cfg, &checks, results)?;
    Ok(checks)
}
