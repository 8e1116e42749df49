//! The acceptance suite: one pass/fail outcome per criterion.

use std::sync::OnceLock;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use polylab_core::gw_baseline::{simulate_gw, GwConfig, Offspring};
use polylab_core::partition_engine::{evolve_profile, run_ensemble, window_from_trace};
use polylab_core::replica_estimators::lemmas::{intersection_histogram, inverse_moment};
use polylab_core::replica_estimators::McBudget;
use serde::Serialize;

use crate::experiments::{self as ex, CltData, Lab, RateData};
use crate::output::{Check, Report};

pub const CRITERIA: [(u8, &str); 9] = [
    (1, "local limit and return constants"),
    (2, "route equivalence of replica moments"),
    (3, "L2 rate of convergence"),
    (4, "conditional variance identity"),
    (5, "window statistic variance and Gaussianity"),
    (6, "asymptotic independence of the window statistic"),
    (7, "random walk lemma checks"),
    (8, "Galton-Watson baseline"),
    (9, "thread-count determinism"),
];

#[derive(Clone, Debug, Serialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: String,
    pub passed: bool,
    pub seconds: f64,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub report: Report,
}

impl CriterionOutcome {
    /// `criterion N [PASS|FAIL] title (seconds)` followed by failing checks.
    pub fn line(&self) -> String {
        let mut s = format!(
            "criterion {} [{}] {} ({:.1} s)",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.seconds
        );
        for c in self.checks.iter().filter(|c| !c.passed) {
            s.push_str(&format!(
                "\n    failed: {}: value {:.6e} target {:.6e} ({})",
                c.name, c.value, c.target, c.tolerance
            ));
        }
        s
    }
}

/// Runs criteria on a shared laboratory, reusing the rate and window data.
pub struct Suite<'a> {
    pub lab: &'a Lab,
    rate: OnceLock<Result<RateData, String>>,
    clt: OnceLock<Result<CltData, String>>,
}

impl<'a> Suite<'a> {
    pub fn new(lab: &'a Lab) -> Self {
        Self { lab, rate: OnceLock::new(), clt: OnceLock::new() }
    }

    fn rate(&self) -> Result<&RateData> {
        self.rate
            .get_or_init(|| ex::rate_data(self.lab).map_err(|e| format!("{e:#}")))
            .as_ref()
            .map_err(|e| anyhow!("{e}"))
    }

    fn clt(&self) -> Result<&CltData> {
        self.clt
            .get_or_init(|| ex::clt_data(self.lab).map_err(|e| format!("{e:#}")))
            .as_ref()
            .map_err(|e| anyhow!("{e}"))
    }

    pub fn run(&self, id: u8) -> Result<CriterionOutcome> {
        let title = CRITERIA.iter().find(|c| c.0 == id).with_context(|| format!("no criterion {id}"))?.1;
        let start = Instant::now();
        let report = match id {
            1 => ex::constants_report(self.lab)?,
            2 => ex::replica_moment_report(self.lab)?,
            3 => ex::rate_report(self.lab, self.rate()?),
            4 => ex::condvar_report(self.lab)?,
            5 => {
                let mut r = Report::new("window");
                ex::window_checks(self.clt()?, &mut r)?;
                r
            }
            6 => {
                let mut r = Report::new("mixing");
                ex::mixing_checks(self.clt()?, &mut r)?;
                r
            }
            7 => ex::lemma_report(self.lab)?,
            8 => ex::gw_report(self.lab, Some(&self.rate()?.fit))?,
            9 => determinism_report(self.lab)?,
            _ => bail!("no criterion {id}"),
        };
        Ok(CriterionOutcome {
            id,
            title: title.into(),
            passed: report.passed(),
            seconds: start.elapsed().as_secs_f64(),
            checks: report.checks.clone(),
            notes: report.notes.clone(),
            report,
        })
    }
}

/// Reduced versions of the stochastic experiments, serialised.
fn determinism_outputs(lab: &Lab) -> Result<Vec<(String, String)>> {
    let s = lab.budgets.determinism_samples;
    let ctx = lab.context(lab.cfg.beta)?;
    let d = lab.cfg.dim;
    let mut out = Vec::new();
    let mut push = |name: &str, v: serde_json::Value| out.push((name.to_string(), v.to_string()));

    push("l2_distance", serde_json::to_value(ctx.l2_distance_mc(32, McBudget::new(s, lab.seed(1000))))?);
    let sweep = lab.sweep(lab.cfg.window * 2);
    let windows = run_ensemble(&lab.env_base(lab.cfg.beta), lab.seed(1001), 64, |env| {
        let (tr, _) = evolve_profile::<f64>(env, &sweep)?;
        Ok(window_from_trace(&tr, 2, lab.cfg.window))
    })?;
    push("window", serde_json::to_value(&windows)?);
    push("histogram", serde_json::to_value(intersection_histogram(d, 200, s, lab.seed(1002))?)?);
    let gw = GwConfig { offspring: Offspring::Poisson { mean: 2.0 }, n: 8, big_n: 20, replicates: s / 10 };
    push("gw", serde_json::to_value(simulate_gw(&gw, lab.seed(1003))?)?);
    push("d4_bridge", serde_json::to_value(ctx.d4_bridge(16, McBudget::new(s / 10, lab.seed(1004)))?)?);
    push("inverse_moment", serde_json::to_value(inverse_moment(d, 100, 2.5, McBudget::new(s, lab.seed(1005)))?)?);
    Ok(out)
}

pub const DETERMINISM_THREADS: [usize; 2] = [1, 4];

/// Byte-identical outputs under different thread pools.
pub fn determinism_report(lab: &Lab) -> Result<Report> {
    let mut runs = Vec::new();
    for t in DETERMINISM_THREADS {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build()?;
        runs.push(pool.install(|| determinism_outputs(lab))?);
    }
    let mut r = Report::new("determinism");
    for (i, (name, first)) in runs[0].iter().enumerate() {
        let same = runs[1..].iter().all(|run| &run[i].1 == first);
        r.checks.push(Check::above(
            &format!("{name}: identical output with {:?} threads", DETERMINISM_THREADS),
            if same { 1.0 } else { 0.0 },
            0.5,
        ));
        r.set(name, first.len());
    }
    r.notes.push("values record the length of each serialised output".into());
    Ok(r)
}
