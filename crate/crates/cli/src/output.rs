//! Result records and their CSV / JSON emission.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use polylab_core::MomentEstimate;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::ExperimentConfig;

/// One tolerance check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub target: f64,
    pub tolerance: String,
    pub passed: bool,
}

impl Check {
    /// `|value - target| <= rel * |target|`.
    pub fn relative(name: &str, value: f64, stderr: Option<f64>, target: f64, rel: f64) -> Self {
        Self {
            name: name.into(),
            value,
            stderr,
            target,
            tolerance: format!("relative {rel}"),
            passed: (value - target).abs() <= rel * target.abs(),
        }
    }

    /// `|value - target| <= abs`.
    pub fn absolute(name: &str, value: f64, stderr: Option<f64>, target: f64, abs: f64) -> Self {
        Self {
            name: name.into(),
            value,
            stderr,
            target,
            tolerance: format!("absolute {abs}"),
            passed: (value - target).abs() <= abs,
        }
    }

    /// Two estimates agree within `k` combined standard errors, plus a
    /// rounding allowance so that two exact values can agree.
    pub fn agree(name: &str, a: &MomentEstimate, b: &MomentEstimate, k: f64) -> Self {
        let se = a.combined_stderr(b);
        let rounding = 1e-12 * a.value.abs().max(b.value.abs());
        Self {
            name: name.into(),
            value: a.value,
            stderr: Some(se),
            target: b.value,
            tolerance: format!("{k} combined stderr"),
            passed: (a.value - b.value).abs() <= k * se + rounding,
        }
    }

    /// `value < bound`.
    pub fn below(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            stderr: None,
            target: bound,
            tolerance: "upper bound".into(),
            passed: value < bound,
        }
    }

    /// `value > bound`.
    pub fn above(name: &str, value: f64, bound: f64) -> Self {
        Self {
            name: name.into(),
            value,
            stderr: None,
            target: bound,
            tolerance: "lower bound".into(),
            passed: value > bound,
        }
    }
}

/// A CSV table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<I: IntoIterator<Item = String>>(&mut self, row: I) {
        self.rows.push(row.into_iter().collect());
    }

    /// Row of `(quantity, n, value, stderr, method)`.
    pub fn push_estimate(&mut self, quantity: &str, n: usize, e: &MomentEstimate) {
        self.push([
            quantity.to_string(),
            n.to_string(),
            fmt(e.value),
            fmt(e.stderr),
            format!("{:?}", e.method).to_lowercase(),
        ]);
    }
}

/// Full-precision rendering of a float.
pub fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// Output of one command.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub checks: Vec<Check>,
    /// Every computed value, keyed by name.
    pub values: Value,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub tables: Vec<Table>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            checks: Vec::new(),
            values: Value::Object(Default::default()),
            notes: Vec::new(),
            tables: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn set<T: Serialize>(&mut self, key: &str, v: T) {
        let v = serde_json::to_value(v).expect("value serialises");
        self.values.as_object_mut().expect("object").insert(key.into(), v);
    }
}

/// JSON summary written next to the CSV tables.
#[derive(Serialize)]
struct Summary<'a> {
    command: &'a str,
    config_hash: String,
    seed: u64,
    tier: crate::config::Tier,
    threads: usize,
    config: &'a ExperimentConfig,
    passed: bool,
    checks: &'a [Check],
    values: &'a Value,
    notes: &'a [String],
    tables: Vec<String>,
}

/// Writes `<command>_<table>.csv` files and `<command>.json`; returns the
/// written paths.
pub fn write_report(dir: &Path, cfg: &ExperimentConfig, report: &Report) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let stem = report.command.replace('-', "_");
    let mut written = Vec::new();
    for t in &report.tables {
        let path = dir.join(format!("{stem}_{}.csv", t.name));
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
        w.write_record(&t.header)?;
        for row in &t.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        written.push(path);
    }
    let summary = Summary {
        command: &report.command,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        tier: cfg.tier,
        threads: rayon::current_num_threads(),
        config: cfg,
        passed: report.passed(),
        checks: &report.checks,
        values: &report.values,
        notes: &report.notes,
        tables: written.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect(),
    };
    let path = dir.join(format!("{stem}.json"));
    fs::write(&path, serde_json::to_vec_pretty(&summary)?).with_context(|| format!("writing {}", path.display()))?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_tolerances() {
        assert!(Check::relative("r", 1.09, None, 1.0, 0.1).passed);
        assert!(!Check::relative("r", 0.89, None, 1.0, 0.1).passed);
        assert!(Check::absolute("a", -0.52, None, -0.5, 0.05).passed);
        assert!(Check::below("b", 0.01, 0.02).passed && !Check::above("b", 0.01, 0.02).passed);
        let x = MomentEstimate::exact(1.0);
        let y = MomentEstimate::exact(1.0 + 1e-15);
        assert!(Check::agree("e", &x, &y, 3.0).passed);
        assert!(!Check::agree("e", &x, &MomentEstimate::exact(1.001), 3.0).passed);
    }

    #[test]
    fn report_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = Report::new("demo-run");
        r.checks.push(Check::below("c", 1.0, 2.0));
        r.set("x", 2.5);
        let mut t = Table::new("rows", &["a", "b"]);
        t.push(["1".to_string(), fmt(0.5)]);
        r.tables.push(t);
        let paths = write_report(dir.path(), &ExperimentConfig::default(), &r).unwrap();
        assert_eq!(paths.len(), 2);
        let csv = fs::read_to_string(dir.path().join("demo_run_rows.csv")).unwrap();
        assert_eq!(csv, "a,b\n1,5e-1\n");
        let json: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("demo_run.json")).unwrap()).unwrap();
        assert_eq!(json["passed"], true);
        assert_eq!(json["values"]["x"], 2.5);
        assert_eq!(json["tables"][0], "demo_run_rows.csv");
    }
}
