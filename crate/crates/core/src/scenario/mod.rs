//! Scenario files, runs and their artifacts.

mod metrics;
mod parse;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use crate::border_router::SerialLine;
use crate::cloud::{CloudStore, OutageSchedule};
use crate::gateway::DEFAULT_BATCH_SIZE;
use crate::ip::{NodeId, Prefix};
use crate::kernel::SimTime;
use crate::lowpan::link::{LinkModel, Topology};
use crate::mote::DEFAULT_SAMPLE_PERIOD_MS;
use crate::network::{
    Action, Network, NetworkConfig, NetworkError, NodeSpec, CLOUD_ONE_WAY_MS, DEFAULT_DRAIN_MS, DEFAULT_PREFIX,
};

pub use metrics::{is_metric_key, LinkMetrics, MoteMetrics, RunMetrics, MOTE_METRIC_KEYS, SUMMARY_KEYS};
pub use parse::{parse_duration, parse_scenario, ParseError};

pub const DEFAULT_RANGE: f64 = 10.0;
pub const DEFAULT_DURATION_MS: u64 = 3_600_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Comparison {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparison::Eq => lhs == rhs,
            Comparison::Ne => lhs != rhs,
            Comparison::Lt => lhs < rhs,
            Comparison::Le => lhs <= rhs,
            Comparison::Gt => lhs > rhs,
            Comparison::Ge => lhs >= rhs,
        }
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Comparison::Eq => "==",
            Comparison::Ne => "!=",
            Comparison::Lt => "<",
            Comparison::Le => "<=",
            Comparison::Gt => ">",
            Comparison::Ge => ">=",
        })
    }
}

/// `expect <metric> <op> <value>`
#[derive(Debug, Clone, PartialEq)]
pub struct Expectation {
    pub metric: String,
    pub op: Comparison,
    pub value: f64,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationResult {
    pub expectation: Expectation,
    /// Summary value, or `None` when the metric has no numeric value.
    pub actual: Option<f64>,
    pub passed: bool,
}

impl fmt::Display for ExpectationResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = &self.expectation;
        let actual = self.actual.map_or_else(|| "n/a".to_string(), |a| a.to_string());
        write!(
            f,
            "{} line {}: {} {} {} (actual {})",
            if self.passed { "PASS" } else { "FAIL" },
            e.line,
            e.metric,
            e.op,
            e.value,
            actual
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub duration_ms: u64,
    pub period_ms: u64,
    pub nodes: Vec<NodeSpec>,
    /// Unit-disk radius; `None` means `DEFAULT_RANGE`.
    pub range: Option<f64>,
    pub default_link: LinkModel,
    /// Explicit overrides `(a, b, loss, source line)`, applied both ways.
    pub links: Vec<(NodeId, NodeId, f64, usize)>,
    pub outages: Vec<(u64, u64)>,
    pub gateway_boot_ms: u64,
    pub batch_size: usize,
    pub buffer_capacity: Option<usize>,
    pub serial_error: f64,
    pub prefix: Prefix,
    pub drain_ms: u64,
    pub phase_jitter: bool,
    pub actions: Vec<(u64, Action, usize)>,
    pub expectations: Vec<Expectation>,
    pub warnings: Vec<String>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 0,
            duration_ms: DEFAULT_DURATION_MS,
            period_ms: DEFAULT_SAMPLE_PERIOD_MS,
            nodes: Vec::new(),
            range: None,
            default_link: LinkModel::default(),
            links: Vec::new(),
            outages: Vec::new(),
            gateway_boot_ms: 0,
            batch_size: DEFAULT_BATCH_SIZE,
            buffer_capacity: None,
            serial_error: 0.0,
            prefix: DEFAULT_PREFIX,
            drain_ms: DEFAULT_DRAIN_MS,
            phase_jitter: true,
            actions: Vec::new(),
            expectations: Vec::new(),
            warnings: Vec::new(),
        }
    }
}

impl ScenarioConfig {
    /// Unit-disk links over the node positions, then explicit overrides.
    pub fn topology(&self) -> Topology {
        let positions: Vec<_> = self.nodes.iter().map(|n| (n.id, n.x, n.y)).collect();
        let mut t = Topology::unit_disk(&positions, self.range.unwrap_or(DEFAULT_RANGE), self.default_link);
        for &(a, b, loss, _) in &self.links {
            t.set(
                a,
                b,
                LinkModel {
                    loss,
                    ..self.default_link
                },
            );
        }
        t
    }

    pub fn mote_ids(&self) -> Vec<NodeId> {
        self.nodes.iter().filter(|n| !n.border).map(|n| n.id).collect()
    }

    pub fn to_network_config(&self) -> NetworkConfig {
        let windows = self.outages.iter().map(|&(s, e)| (SimTime(s), SimTime(e))).collect();
        NetworkConfig {
            seed: self.seed,
            nodes: self.nodes.clone(),
            topology: self.topology(),
            prefix: self.prefix,
            period_ms: self.period_ms,
            duration_ms: self.duration_ms,
            phase_jitter: self.phase_jitter,
            gateway_boot_ms: self.gateway_boot_ms,
            outages: OutageSchedule::new(windows).expect("parser keeps outages sorted and disjoint"),
            batch_size: self.batch_size,
            buffer_capacity: self.buffer_capacity,
            serial: SerialLine {
                byte_error: self.serial_error,
                ..SerialLine::default()
            },
            cloud_one_way_ms: CLOUD_ONE_WAY_MS,
            drain_ms: self.drain_ms,
            check_loops: true,
            actions: self.actions.iter().map(|&(t, a, _)| (SimTime(t), a)).collect(),
        }
    }
}

/// A finished run: the network in its final state plus derived metrics.
pub struct ScenarioRun {
    pub network: Network,
    pub metrics: RunMetrics,
    pub expectations: Vec<ExpectationResult>,
}

pub fn run(config: &ScenarioConfig) -> Result<ScenarioRun, NetworkError> {
    let mut network = Network::new(config.to_network_config())?;
    network.run();
    let metrics = RunMetrics::collect(&network, config.warnings.len());
    let summary = metrics.summary();
    let expectations = config
        .expectations
        .iter()
        .map(|e| {
            let actual = summary.get(&e.metric).and_then(|v| v.parse::<f64>().ok());
            ExpectationResult {
                expectation: e.clone(),
                actual,
                passed: actual.is_some_and(|a| e.op.holds(a, e.value)),
            }
        })
        .collect();
    Ok(ScenarioRun {
        network,
        metrics,
        expectations,
    })
}

impl ScenarioRun {
    /// Built-in invariants and every declared expectation hold.
    pub fn passed(&self) -> bool {
        self.metrics.invariants_hold() && self.expectations.iter().all(|e| e.passed)
    }

    /// Write `summary.txt`, `motes.csv`, `links.csv`, `series.csv`,
    /// `receipts.log`, `journal.bin` and `journal.ack` into `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut summary = String::new();
        for (k, v) in self.metrics.summary() {
            summary.push_str(&format!("{k}={v}\n"));
        }
        fs::write(dir.join("summary.txt"), summary)?;
        self.metrics.write_motes_csv(fs::File::create(dir.join("motes.csv"))?)?;
        self.metrics.write_links_csv(fs::File::create(dir.join("links.csv"))?)?;
        CloudStore::write_csv(
            self.network.cloud().iter(),
            io::BufWriter::new(fs::File::create(dir.join("series.csv"))?),
        )
        .map_err(io::Error::other)?;
        let mut receipts = io::BufWriter::new(fs::File::create(dir.join("receipts.log"))?);
        for line in self.network.gateway().receipts() {
            writeln!(receipts, "{line}")?;
        }
        receipts.flush()?;
        let store = self.network.gateway().journal().store();
        fs::write(dir.join("journal.bin"), &store.entries)?;
        fs::write(dir.join("journal.ack"), &store.acks)?;
        Ok(())
    }
}

/// Read a `summary.txt` written by `write_artifacts`.
pub fn read_summary(dir: &Path) -> io::Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(dir.join("summary.txt"))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, format!("bad summary line `{l}`")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASELINE: &str = "\
seed 3
duration 1h
node 1 0 0 border
node 2 8 0
node 3 0 8
node 4 -8 0
node 5 0 -8
node 6 8 8
expect completeness == 1
expect stored_duplicates == 0
";

    #[test]
    fn comparisons() {
        assert!(Comparison::Eq.holds(1.0, 1.0));
        assert!(Comparison::Ne.holds(1.0, 2.0));
        assert!(Comparison::Lt.holds(1.0, 2.0));
        assert!(Comparison::Le.holds(2.0, 2.0));
        assert!(Comparison::Gt.holds(3.0, 2.0));
        assert!(!Comparison::Ge.holds(1.0, 2.0));
    }

    #[test]
    fn five_mote_baseline_hour() {
        let cfg = parse_scenario(BASELINE).unwrap();
        let r = run(&cfg).unwrap();
        assert!(r.passed(), "{:?}", r.expectations);
        assert_eq!(r.metrics.expected, 5 * 900);
        assert_eq!(r.metrics.delivered, 5 * 900);
        for m in &r.metrics.motes {
            assert_eq!((m.generated, m.delivered, m.missing), (900, 900, 0));
        }
        let summary = r.metrics.summary();
        assert_eq!(summary["completeness"], "1.000000");
        let motes = cfg.mote_ids();
        assert!(summary.keys().all(|k| is_metric_key(k, &motes)));
        assert!(SUMMARY_KEYS.iter().all(|k| summary.contains_key(*k)));
    }

    #[test]
    fn failing_expectation_fails_the_run() {
        let text = format!("{BASELINE}expect delivered < 10\n");
        let r = run(&parse_scenario(&text).unwrap()).unwrap();
        assert!(r.metrics.invariants_hold());
        assert!(!r.passed());
        let bad: Vec<_> = r.expectations.iter().filter(|e| !e.passed).collect();
        assert_eq!(bad.len(), 1);
        assert_eq!(bad[0].expectation.line, 11);
        assert!(bad[0].to_string().starts_with("FAIL line 11: delivered < 10"));
    }

    #[test]
    fn artifacts_are_reproducible() {
        let cfg = parse_scenario(&BASELINE.replace("1h", "10m")).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        run(&cfg).unwrap().write_artifacts(a.path()).unwrap();
        run(&cfg).unwrap().write_artifacts(b.path()).unwrap();
        for f in [
            "summary.txt",
            "motes.csv",
            "links.csv",
            "series.csv",
            "receipts.log",
            "journal.bin",
            "journal.ack",
        ] {
            let x = fs::read(a.path().join(f)).unwrap();
            assert!(!x.is_empty(), "{f} empty");
            assert_eq!(x, fs::read(b.path().join(f)).unwrap(), "{f} differs");
        }
        let s = read_summary(a.path()).unwrap();
        assert_eq!(s["delivered"], "750");
        assert_eq!(s["invariant_conservation"], "pass");
    }
}
