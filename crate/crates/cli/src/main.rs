//! `aqmesh run | check | report`
//!
//! Exit status: 0 when every invariant and expectation holds, 1 when one
//! fails, 2 for configuration or I/O errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use aqmesh::scenario::{self, ScenarioConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aqmesh", version, about = "Run air-quality mesh scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write its artifacts.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and validate a scenario without running it.
    Check {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Summarize the artifacts of an earlier run.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

const PASS: u8 = 0;
const FAIL: u8 = 1;
const CONFIG_ERROR: u8 = 2;

fn load(path: &Path) -> anyhow::Result<ScenarioConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    scenario::parse_scenario(&text).with_context(|| path.display().to_string())
}

fn run(path: &Path, out: &Path, seed: Option<u64>) -> anyhow::Result<u8> {
    let mut config = load(path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    for w in &config.warnings {
        eprintln!("warning: {w}");
    }
    let result = scenario::run(&config)?;
    result
        .write_artifacts(out)
        .with_context(|| format!("writing artifacts to {}", out.display()))?;

    let m = &result.metrics;
    println!(
        "seed={} motes={} delivered={}/{} completeness={:.6} shed={} duplicates_suppressed={}",
        m.seed,
        m.motes.len(),
        m.delivered,
        m.expected,
        m.completeness(),
        m.shed,
        m.duplicates_suppressed
    );
    for (name, ok) in m.invariants() {
        println!("{} {name}", if ok { "PASS" } else { "FAIL" });
    }
    for e in &result.expectations {
        println!("{e}");
    }
    Ok(if result.passed() { PASS } else { FAIL })
}

fn check(path: &Path) -> anyhow::Result<u8> {
    let config = load(path)?;
    for w in &config.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "ok: {} nodes ({} motes), {} links, duration {} ms, {} expectations",
        config.nodes.len(),
        config.mote_ids().len(),
        config.topology().len() / 2,
        config.duration_ms,
        config.expectations.len()
    );
    Ok(PASS)
}

fn report(out: &Path) -> anyhow::Result<u8> {
    let summary = scenario::read_summary(out).with_context(|| format!("reading summary in {}", out.display()))?;
    for (k, v) in &summary {
        if !k.starts_with("mote.") {
            println!("{k:<24} {v}");
        }
    }
    let failed: u64 = summary
        .get("invariants_failed")
        .and_then(|v| v.parse().ok())
        .context("summary lacks invariants_failed")?;
    Ok(if failed == 0 { PASS } else { FAIL })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario, out, seed } => run(scenario, out, *seed),
        Command::Check { scenario } => check(scenario),
        Command::Report { out } => report(out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(CONFIG_ERROR)
        }
    }
}
