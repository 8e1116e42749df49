use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use polylab_cli::accept::{Suite, CRITERIA};
use polylab_cli::config::{ExperimentConfig, Tier};
use polylab_cli::experiments::{self as ex, Lab};
use polylab_cli::output::{write_report, Report};

#[derive(Parser)]
#[command(name = "polylab", version, about = "Directed polymers in weak disorder: experiments and acceptance suite")]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Budget tier, overriding the configuration.
    #[arg(long, global = true, value_enum)]
    tier: Option<Tier>,
    /// Output directory for CSV and JSON files.
    #[arg(long, global = true, default_value = "polylab-out")]
    out: PathBuf,
    /// Cache directory for the Green table.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Local limit constants, the return probability and the limits.
    Constants,
    /// Tabulated Green function against its asymptotic form.
    Green,
    /// Second and fourth moments by every available route.
    ReplicaMoment,
    /// Polynomial rate of the L2 distance to the limit.
    Rate,
    /// Window statistic: variance, Gaussianity and mixing.
    Clt,
    /// Conditional variance sums.
    Condvar,
    /// Random walk intersection lemmas.
    LemmaChecks,
    /// Galton-Watson baseline with geometric rate.
    Gw,
    /// Acceptance criteria with one pass/fail line each.
    Accept {
        /// Run only these criteria.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
    /// Experimental: fourth moment of the conditional variance sum.
    S4 {
        #[arg(long, default_value_t = 4)]
        n: usize,
        #[arg(long, default_value_t = 2000)]
        envs: u64,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExperimentConfig::from_json(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.tier {
        cfg.tier = t;
    }
    if cli.cache_dir.is_some() {
        cfg.cache_dir = cli.cache_dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(cli: &Cli, cfg: &ExperimentConfig, report: &Report) -> Result<bool> {
    for c in &report.checks {
        println!("[{}] {}: {:.6e} vs {:.6e} ({})", if c.passed { "ok" } else { "FAIL" }, c.name, c.value, c.target, c.tolerance);
    }
    for n in &report.notes {
        println!("note: {n}");
    }
    for p in write_report(&cli.out, cfg, report)? {
        println!("wrote {}", p.display());
    }
    Ok(report.passed())
}

fn run(cli: &Cli, cfg: ExperimentConfig) -> Result<bool> {
    let lab = Lab::new(cfg.clone())?;
    let report = match &cli.command {
        Command::Constants => ex::constants_report(&lab)?,
        Command::Green => ex::green_report(&lab)?,
        Command::ReplicaMoment => ex::replica_moment_report(&lab)?,
        Command::Rate => ex::rate_report(&lab, &ex::rate_data(&lab)?),
        Command::Clt => ex::clt_report(&lab, &ex::clt_data(&lab)?)?,
        Command::Condvar => ex::condvar_report(&lab)?,
        Command::LemmaChecks => ex::lemma_report(&lab)?,
        Command::Gw => ex::gw_report(&lab, None)?,
        Command::S4 { n, envs } => ex::s4_report(&lab, *n, *envs)?,
        Command::Accept { only } => {
            let ids: Vec<u8> = if only.is_empty() { CRITERIA.iter().map(|c| c.0).collect() } else { only.clone() };
            let suite = Suite::new(&lab);
            let mut failed = Vec::new();
            let mut outcomes = Vec::new();
            for id in ids {
                let o = suite.run(id)?;
                println!("{}", o.line());
                write_report(&cli.out, &cfg, &Report { command: format!("accept-{id}"), ..o.report.clone() })?;
                if !o.passed {
                    failed.push(id);
                }
                outcomes.push(o);
            }
            let mut summary = Report::new("accept");
            summary.checks = outcomes.iter().flat_map(|o| o.checks.clone()).collect();
            summary.set("criteria", &outcomes);
            write_report(&cli.out, &cfg, &summary)?;
            if failed.is_empty() {
                println!("all criteria passed");
            } else {
                println!("failed criteria: {failed:?}");
            }
            return Ok(failed.is_empty());
        }
    };
    emit(cli, &cfg, &report)
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<polylab_core::Error>() {
        Some(polylab_core::Error::Config(_) | polylab_core::Error::Domain(_)) => 2,
        Some(polylab_core::Error::Budget { .. } | polylab_core::Error::Io(_)) => 3,
        _ if e.downcast_ref::<std::io::Error>().is_some() => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match run(&cli, cfg) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
