//! Artifact emission: CSV tables and a JSON summary per run.
//!
//! Every CSV starts with two `#` comment lines carrying the config hash and
//! the calibration version; the JSON summary holds both as fields. Nothing
//! time-dependent is written, so identical configs give identical files.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;

/// One declared PASS criterion of a subcommand.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

pub fn check(name: &str, pass: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        pass,
        detail: detail.into(),
    }
}

pub struct Artifacts {
    pub dir: PathBuf,
    hash: String,
    version: u32,
    written: Vec<PathBuf>,
}

/// Formats a float so that it round-trips exactly.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}

impl Artifacts {
    pub fn create(cfg: &RunConfig, subcommand: &str) -> std::io::Result<Self> {
        let dir = cfg.out.join(subcommand);
        fs::create_dir_all(&dir)?;
        Ok(Artifacts {
            dir,
            hash: cfg.hash(),
            version: cfg.calibration.version,
            written: Vec::new(),
        })
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    pub fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> std::io::Result<()> {
        let path = self.path(name);
        let mut file = fs::File::create(&path)?;
        writeln!(file, "# config_hash={}", self.hash)?;
        writeln!(file, "# calibration_version={}", self.version)?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()
    }

    /// Raw text artifact (JSON collections and the like).
    pub fn text(&mut self, name: &str, body: &str) -> std::io::Result<()> {
        let path = self.path(name);
        fs::write(path, body)
    }

    pub fn summary(&mut self, subcommand: &str, cfg: &RunConfig, checks: &[Check], results: Value) -> std::io::Result<()> {
        let body = json!({
            "subcommand": subcommand,
            "config_hash": self.hash,
            "calibration_version": self.version,
            "config": cfg.resolved,
            "pass": checks.iter().all(|c| c.pass),
            "criteria": checks,
            "results": results,
        });
        let text = serde_json::to_string_pretty(&body).expect("summary serialises");
        self.text("summary.json", &text)
    }
}
