//! `norm-probe`, `bump-chain`, `schedule-compare` and `a2-growth`.

use serde_json::json;

use sdlab_core::error::Error;
use sdlab_core::lpdecomp::Schedule;
use sdlab_core::normlab::{
    a2_growth_experiment, beurling_power_growth, certified_l2_norm, epsilon_bump_chain, schedule_exponent,
    schedule_series, weighted_lp_lower_bound, BoundModel, BumpConfig, NormMethod,
};
use sdlab_core::weights::characteristics;

use super::{beurling_power, operator, power_family};
use crate::artifacts::{check, num, Artifacts};
use crate::config::RunConfig;
use crate::{Failure, Outcome};

fn method_name(m: NormMethod) -> &'static str {
    match m {
        NormMethod::PowerIteration => "power-iteration",
        NormMethod::Dense => "dense",
        NormMethod::InputMaximization => "input-maximization",
    }
}

pub fn norm_probe(cfg: &RunConfig, art: &mut Artifacts) -> Outcome {
    let op = operator(cfg)?;
    let (fam, ws) = power_family(cfg)?;
    let power = cfg.power();
    let adjoint = op.adjoint_error(4, cfg.seed);
    let mut rows = Vec::new();
    let mut history = Vec::new();
    let mut table = Vec::new();
    let (mut stalled, mut non_monotone) = (Vec::new(), Vec::new());
    for (delta, w) in &ws {
        let ap = characteristics(w, cfg.p, &fam)?.ap;
        if cfg.p != 2.0 {
            let lb = weighted_lp_lower_bound(&op, w, cfg.p, cfg.budget, cfg.seed)?;
            rows.push(vec![
                num(*delta),
                num(cfg.p),
                num(ap),
                num(lb.value),
                method_name(lb.method).into(),
                cfg.budget.to_string(),
                String::new(),
                "lower-bound".into(),
            ]);
            table.push(json!({ "delta": delta, "ap": ap, "lower_bound": lb }));
            continue;
        }
        let (est, status) = match certified_l2_norm(&op, w, &power) {
            Ok(e) => (e, "converged"),
            Err(Error::NonConvergence { iterations, lower, upper }) => {
                stalled.push(*delta);
                rows.push(vec![
                    num(*delta),
                    num(2.0),
                    num(ap),
                    num(lower),
                    "power-iteration".into(),
                    iterations.to_string(),
                    num(upper / lower - 1.0),
                    format!("bracket [{lower:e}, {upper:e}]"),
                ]);
                table.push(json!({ "delta": delta, "ap": ap, "lower": lower, "upper": upper }));
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        if est.history.windows(2).any(|h| h[1] < h[0] * (1.0 - 1e-12)) {
            non_monotone.push(*delta);
        }
        for (k, v) in est.history.iter().enumerate() {
            history.push(vec![num(*delta), (k + 1).to_string(), num(*v)]);
        }
        rows.push(vec![
            num(*delta),
            num(2.0),
            num(ap),
            num(est.value),
            method_name(est.method).into(),
            est.iterations.to_string(),
            num(est.residual),
            status.into(),
        ]);
        table.push(json!({ "delta": delta, "ap": ap, "estimate": est }));
    }
    art.csv(
        "norm_probe.csv",
        &["delta", "p", "ap", "norm", "method", "iterations", "residual", "status"],
        &rows,
    )?;
    art.csv("norm_history.csv", &["delta", "iteration", "rayleigh"], &history)?;
    let list = |v: &[f64]| v.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ");
    let checks = vec![
        check(
            "adjoint consistency",
            adjoint <= cfg.adjoint_tol,
            format!("relative mismatch {adjoint:.2e} against {:.0e}", cfg.adjoint_tol),
        ),
        check(
            "convergence",
            stalled.is_empty(),
            if cfg.p != 2.0 {
                "lower bounds only, nothing to converge".to_string()
            } else if stalled.is_empty() {
                "every norm converged".to_string()
            } else {
                format!("stalled at delta = {}", list(&stalled))
            },
        ),
        check(
            "monotone Rayleigh quotients",
            non_monotone.is_empty(),
            if non_monotone.is_empty() {
                "every history is nondecreasing".to_string()
            } else {
                format!("decreasing at delta = {}", list(&non_monotone))
            },
        ),
    ];
    let results = json!({ "operator": op.descriptor, "adjoint_error": adjoint, "rows": table });
    art.summary("norm-probe", cfg, &checks, results)?;
    Ok(checks)
}

pub fn bump_chain(cfg: &RunConfig, art: &mut Artifacts) -> Outcome {
    if cfg.p != 2.0 {
        return Err(Failure::Usage("p: the bump chain runs on L² only".into()));
    }
    let (fam, ws) = power_family(cfg)?;
    let bc = BumpConfig {
        c_d: cfg.calibration.reverse_holder_c,
        piece_const: cfg.calibration.piece_const,
        eps: None,
        j_max: cfg.j_max,
        power: cfg.power(),
    };
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    let mut failed = Vec::new();
    for (delta, w) in &ws {
        let rep = epsilon_bump_chain(&cfg.kernel, w, &cfg.schedule, &fam, &bc)?;
        for r in &rep.rows {
            rows.push(vec![
                num(*delta),
                r.j.to_string(),
                r.n_j.to_string(),
                num(r.unweighted),
                num(r.bumped_measured),
                num(r.bumped_bound),
                num(r.interpolated),
                num(r.interpolated_measured),
                num(r.measured),
                r.ok.to_string(),
            ]);
        }
        if !rep.pass {
            failed.push(delta.to_string());
        }
        reports.push(json!({ "delta": delta, "report": rep }));
    }
    art.csv(
        "bump_chain.csv",
        &[
            "delta",
            "j",
            "N(j)",
            "unweighted",
            "bumped_measured",
            "bumped_bound",
            "interpolated",
            "interpolated_measured",
            "measured",
            "ok",
        ],
        &rows,
    )?;
    let checks = vec![check(
        "piecewise interpolation bound",
        failed.is_empty(),
        if failed.is_empty() {
            format!("every piece below its interpolated bound over {} weights", ws.len())
        } else {
            format!("violated at delta = {}", failed.join(", "))
        },
    )];
    art.summary("bump-chain", cfg, &checks, json!({ "weights": reports }))?;
    Ok(checks)
}

pub fn schedule_compare(cfg: &RunConfig, art: &mut Artifacts) -> Outcome {
    let dy = schedule_exponent(&Schedule::Dyadic, cfg.alpha, &cfg.lambdas)?;
    let id = schedule_exponent(&Schedule::Identity, cfg.alpha, &cfg.lambdas)?;
    let rows = cfg
        .lambdas
        .iter()
        .map(|&l| {
            Ok(vec![
                num(l),
                num(schedule_series(l, &Schedule::Dyadic, cfg.alpha)?),
                num(schedule_series(l, &Schedule::Identity, cfg.alpha)?),
            ])
        })
        .collect::<Result<Vec<_>, Error>>()?;
    art.csv("series.csv", &["lambda", "dyadic", "identity"], &rows)?;
    let checks = vec![
        check(
            "dyadic schedule linear",
            (dy.exponent - 1.0).abs() <= cfg.series_tol,
            format!("exponent {:.3} ± {:.3}", dy.exponent, dy.ci),
        ),
        check(
            "identity schedule quadratic",
            (id.exponent - 2.0).abs() <= cfg.series_tol,
            format!("exponent {:.3} ± {:.3}", id.exponent, id.ci),
        ),
    ];
    let results = json!({ "alpha": cfg.alpha, "dyadic": dy, "identity": id });
    art.summary("schedule-compare", cfg, &checks, results)?;
    Ok(checks)
}

pub fn a2_growth(cfg: &RunConfig, art: &mut Artifacts) -> Outcome {
    if cfg.p != 2.0 {
        return Err(Failure::Usage("p: the growth experiment runs on L² only".into()));
    }
    let op = operator(cfg)?;
    let (fam, ws) = power_family(cfg)?;
    let power = cfg.power();
    let bound = if cfg.kernel.is_rough() {
        BoundModel::Quadratic {
            c: cfg.calibration.a2_rough_const,
        }
    } else {
        BoundModel::Linear {
            c: cfg.calibration.a2_smooth_const,
        }
    };
    let rep = a2_growth_experiment(&op, &ws, &fam, bound, &power)?;
    let rows: Vec<Vec<String>> = rep
        .rows
        .iter()
        .map(|r| {
            vec![
                num(r.param),
                num(r.ap),
                num(r.braces),
                num(r.parens),
                num(r.norm),
                num(r.bound),
                num(r.ratio),
                r.violation.to_string(),
            ]
        })
        .collect();
    art.csv(
        "a2_growth.csv",
        &["delta", "ap", "braces", "parens", "norm", "bound", "ratio", "violation"],
        &rows,
    )?;
    let mut checks = vec![check(
        "growth exponent",
        rep.fit.exponent <= cfg.exponent_max,
        format!(
            "exponent {:.3} ± {:.3} against {:.2}; {} of {} rows above the calibrated bound",
            rep.fit.exponent,
            rep.fit.ci,
            cfg.exponent_max,
            rep.violations,
            rep.rows.len()
        ),
    )];
    let mut results = json!({
        "operator": rep.operator,
        "fit_exponent": rep.fit.exponent,
        "ci": rep.fit.ci,
        "fit": rep.fit,
        "bound": bound,
        "rows": rep.rows,
    });
    if beurling_power(cfg).is_some() && cfg.powers.len() > 1 {
        let bm = beurling_power_growth(cfg.grid, &cfg.powers, &ws, &fam, cfg.calibration.beurling_convention, &power)?;
        let rows: Vec<Vec<String>> = bm
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.m.to_string(),
                    num(r.param),
                    num(r.ap),
                    num(r.norm),
                    num(r.ratio_linear),
                    num(r.ratio_log),
                    num(r.ratio_min),
                ]
            })
            .collect();
        art.csv(
            "beurling_powers.csv",
            &["m", "delta", "ap", "norm", "ratio_linear", "ratio_log", "ratio_min"],
            &rows,
        )?;
        checks.push(check(
            "Beurling powers",
            bm.pass,
            format!("constant {:.3} fitted on m = 1, {} violations on higher powers", bm.c, bm.violations),
        ));
        results["beurling_powers"] = json!(bm);
    }
    art.summary("a2-growth", cfg, &checks, results)?;
    Ok(checks)
}
