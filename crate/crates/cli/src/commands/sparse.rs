//! `sparse`: one sparse collection with its sparseness and domination reports.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use sdlab_core::grid::GridFunction;
use sdlab_core::operators::truncation::TruncationPlan;
use sdlab_core::sparse::{build_sparse, verify_sparseness, StoppingConfig};

use super::{coarse_random, ladder, unweighted_norm};
use crate::artifacts::{check, num, Artifacts};
use crate::config::RunConfig;
use crate::{gridio, Failure, Outcome};

pub fn sparse(cfg: &RunConfig, art: &mut Artifacts) -> Outcome {
    let g = cfg.grid;
    let f: GridFunction = match &cfg.input {
        Some(path) => gridio::read(path, g).map_err(|e| Failure::Usage(format!("input: {e}")))?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let vals = coarse_random(g.d, g.n, g.side, cfg.radius, &mut rng)?;
            GridFunction::from_real(g, &vals)?
        }
    };
    if f.is_zero() {
        return Err(Failure::Usage("input: the function vanishes; nothing to dominate".into()));
    }
    gridio::write_binary(&f, &art.dir.join("input.bin"))?;

    let radii = ladder(cfg, &g)?;
    let t_norm = unweighted_norm(&cfg.kernel, g, radii.radii()[0], &cfg.power())?;
    let stopping = StoppingConfig::new(g.d, &radii, t_norm);
    let plan = TruncationPlan::new(&cfg.kernel, g, radii.radii())?;
    let centre = vec![0.0; g.d];
    let b = build_sparse(&plan, &cfg.kernel, &f, (&centre, cfg.radius), &stopping)?;
    let r = &b.report;
    let sp = verify_sparseness(&b.collection, cfg.eta);

    art.text("collection.json", &b.collection.to_json())?;
    let rows: Vec<Vec<String>> = b
        .collection
        .shifts
        .iter()
        .flat_map(|(key, list)| {
            let cert = &b.collection.certificate[key];
            list.iter().zip(cert).map(move |(q, frac)| {
                let idx: Vec<String> = q.index.iter().map(|i| i.to_string()).collect();
                vec![key.replace(',', " "), q.level.to_string(), idx.join(" "), num(q.side()), num(*frac)]
            })
        })
        .collect();
    art.csv("sparse_cubes.csv", &["shift", "level", "index", "side", "strict_sub_fraction"], &rows)?;
    let tail_rows: Vec<Vec<String>> = b
        .tail
        .iter()
        .enumerate()
        .map(|(i, q)| vec![i.to_string(), q.level.to_string(), num(q.side())])
        .collect();
    art.csv("sparse_tail.csv", &["k", "level", "side"], &tail_rows)?;

    let checks = vec![
        check(
            "stopping conditions",
            r.recursion_passes == r.stopping_calls && r.pointwise_violations == 0,
            format!(
                "{} of {} calls met all conditions, {} pointwise violations",
                r.recursion_passes, r.stopping_calls, r.pointwise_violations
            ),
        ),
        check("no nested stopping cubes", r.nested_pairs == 0, format!("{} nested pairs", r.nested_pairs)),
        check(
            "sparseness",
            sp.pass,
            format!("worst strict-subcube fraction {:.4} against η = {:.4}", sp.worst_fraction, cfg.eta),
        ),
        check(
            "pointwise domination",
            r.domination.pass,
            format!(
                "measured constant {:.3}, {} uncovered points",
                r.domination.measured_constant, r.domination.uncovered_points
            ),
        ),
    ];
    let results = json!({
        "cubes": b.collection.len(),
        "t_norm": t_norm,
        "input_l1": f.l1_norm(),
        "input_l2": f.l2_norm(),
        "report": r,
        "sparseness": sp,
    });
    art.summary("sparse", cfg, &checks, results)?;
    Ok(checks)
}
