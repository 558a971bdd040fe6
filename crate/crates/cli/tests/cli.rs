//! End-to-end runs of the `sdlab` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn sdlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdlab")).args(args).output().expect("spawn sdlab")
}

fn out_arg(dir: &TempDir) -> String {
    format!("out={}", dir.path().display())
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn header_hash(csv: &Path) -> String {
    let text = fs::read_to_string(csv).unwrap();
    let line = text.lines().next().unwrap();
    line.strip_prefix("# config_hash=").expect("hash header").to_string()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn grid_check_defaults_pass() {
    let tmp = TempDir::new().unwrap();
    let o = sdlab(&["grid-check", &out_arg(&tmp)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dir = tmp.path().join("grid-check");
    let text = fs::read_to_string(dir.join("grid_check.csv")).unwrap();
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let trials = headers.iter().position(|h| h == "trials").unwrap();
    let failures = headers.iter().position(|h| h == "failures").unwrap();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        assert_eq!(&rec[failures], "0");
        assert!(rec[trials].parse::<usize>().unwrap() >= 10_000);
        rows += 1;
    }
    assert!(rows > 0);
    let s = summary(&dir);
    assert_eq!(s["config_hash"].as_str().unwrap(), header_hash(&dir.join("grid_check.csv")));
    assert_eq!(s["pass"], Value::Bool(true));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = sdlab(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_settings_name_the_field() {
    let tmp = TempDir::new().unwrap();
    let o = sdlab(&["weights", &out_arg(&tmp), "n=0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("n:"), "{}", stderr(&o));

    let o = sdlab(&["weights", &out_arg(&tmp), "colour=blue"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));

    let o = sdlab(&["weights", &out_arg(&tmp), "deltas=1.5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("deltas"), "{}", stderr(&o));
}

#[test]
fn weights_reports_columns_and_oracle_verdict() {
    let tmp = TempDir::new().unwrap();
    let o = sdlab(&["weights", &out_arg(&tmp), "--family", "power", "--p", "2", "n=512"]);
    let dir = tmp.path().join("weights");
    let text = fs::read_to_string(dir.join("weights.csv")).unwrap();
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "delta,ap,ainf,dual_ainf,braces,parens");
    assert!(dir.join("weights_oracle.csv").exists());
    // the exit status must agree with the recorded verdict
    let s = summary(&dir);
    let pass = s["pass"].as_bool().unwrap();
    if pass {
        assert_eq!(o.status.code(), Some(0));
    } else {
        assert_eq!(o.status.code(), Some(2));
        assert!(stderr(&o).contains("criterion failed"), "{}", stderr(&o));
    }
}

#[test]
fn identical_configs_give_identical_artifacts() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    for t in [&a, &b] {
        let o = sdlab(&["grid-check", &out_arg(t), "trials=500", "seed=7"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let o = sdlab(&["schedule-compare", &out_arg(t)]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["grid-check/grid_check.csv", "schedule-compare/series.csv"] {
        let x = fs::read(a.path().join(f)).unwrap();
        let y = fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
    let o = sdlab(&["grid-check", &out_arg(&a), "trials=500", "seed=8"]);
    assert_eq!(o.status.code(), Some(0));
    assert_ne!(
        header_hash(&a.path().join("grid-check/grid_check.csv")),
        header_hash(&b.path().join("grid-check/grid_check.csv"))
    );
}

#[test]
fn config_file_is_read_and_overridden() {
    let tmp = TempDir::new().unwrap();
    let file = tmp.path().join("run.cfg");
    fs::write(&file, "# schedule run\nlambdas = 4, 16, 64, 256, 1024\nseed = 3\n").unwrap();
    let o = sdlab(&["schedule-compare", &out_arg(&tmp), &format!("config={}", file.display()), "seed=4"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = summary(&tmp.path().join("schedule-compare"));
    let cfg = &s["config"];
    assert!(cfg["lambdas"].to_string().contains("1.024e3"), "{cfg}");
    assert_eq!(cfg["seed"].to_string().trim_matches('"'), "4");
}

#[test]
fn sparse_accepts_a_csv_input() {
    let tmp = TempDir::new().unwrap();
    let n = 1024;
    let mut text = String::from("re\n");
    for i in 0..n {
        let x = (i as f64 + 0.5) / n as f64 - 0.5;
        let v = if x.abs() < 0.04 { 1.0 + (70.0 * x).sin() } else { 0.0 };
        text.push_str(&format!("{v}\n"));
    }
    let input = tmp.path().join("f.csv");
    fs::write(&input, text).unwrap();
    let o = sdlab(&["sparse", &out_arg(&tmp), "n=1024", "radius=0.05", &format!("input={}", input.display())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let dir = tmp.path().join("sparse");
    for f in ["collection.json", "sparse_cubes.csv", "sparse_tail.csv", "input.bin", "summary.json"] {
        assert!(dir.join(f).exists(), "missing {f}");
    }
    let s = summary(&dir);
    assert!(s["results"]["cubes"].as_u64().unwrap() > 0);
}

#[test]
fn sparse_rejects_a_mismatched_input() {
    let tmp = TempDir::new().unwrap();
    let input = tmp.path().join("short.csv");
    fs::write(&input, "1\n2\n3\n").unwrap();
    let o = sdlab(&["sparse", &out_arg(&tmp), "n=1024", &format!("input={}", input.display())]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("input"), "{}", stderr(&o));
}

#[test]
fn keys_lists_every_setting() {
    let o = sdlab(&["keys"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for k in ["kernel", "deltas", "eta", "seed", "out"] {
        assert!(text.lines().any(|l| l.starts_with(k)), "missing {k}");
    }
}
