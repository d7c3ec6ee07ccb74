//! Line-oriented scenario files.
//!
//! One `key value...` directive per line; `#` starts a comment. Times take
//! an optional `ms`, `s`, `m` or `h` suffix (bare numbers are ms).
//!
//! ```text
//! seed 42
//! duration 1h
//! node 1 0 0 border
//! node 2 10 0 mote
//! range 10
//! loss 0.1
//! outage 2s 24h
//! expect completeness == 1
//! ```

use std::str::FromStr;

use thiserror::Error;

use crate::ip::{NodeId, Prefix};
use crate::lowpan::link::LinkModel;
use crate::network::{Action, NodeSpec};

use super::{Comparison, Expectation, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError {
        line,
        message: message.into(),
    })
}

/// `250`, `250ms`, `4s`, `10m`, `24h`.
pub fn parse_duration(s: &str) -> Option<u64> {
    let (num, scale) = if let Some(n) = s.strip_suffix("ms") {
        (n, 1)
    } else if let Some(n) = s.strip_suffix('s') {
        (n, 1000)
    } else if let Some(n) = s.strip_suffix('m') {
        (n, 60_000)
    } else if let Some(n) = s.strip_suffix('h') {
        (n, 3_600_000)
    } else {
        (s, 1)
    };
    num.parse::<u64>().ok()?.checked_mul(scale)
}

struct Line<'a> {
    no: usize,
    key: &'a str,
    args: Vec<&'a str>,
}

impl<'a> Line<'a> {
    fn arity(&self, n: usize) -> Result<(), ParseError> {
        if self.args.len() != n {
            return err(
                self.no,
                format!("`{}` takes {} argument(s), got {}", self.key, n, self.args.len()),
            );
        }
        Ok(())
    }

    fn num<T: FromStr>(&self, i: usize, what: &str) -> Result<T, ParseError> {
        self.args[i]
            .parse()
            .or_else(|_| err(self.no, format!("bad {what} `{}`", self.args[i])))
    }

    fn time(&self, i: usize) -> Result<u64, ParseError> {
        parse_duration(self.args[i]).map_or_else(|| err(self.no, format!("bad time `{}`", self.args[i])), Ok)
    }

    fn prob(&self, i: usize) -> Result<f64, ParseError> {
        let p: f64 = self.num(i, "probability")?;
        if !(0.0..=1.0).contains(&p) {
            return err(self.no, format!("probability {p} outside [0, 1]"));
        }
        Ok(p)
    }

    fn node(&self, i: usize) -> Result<NodeId, ParseError> {
        Ok(NodeId(self.num(i, "node id")?))
    }
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig, ParseError> {
    let mut c = ScenarioConfig::default();
    let mut loss = 0.0;
    let mut latency = LinkModel::default().latency_ms;
    let mut retries = LinkModel::default().max_retransmissions;
    let mut node_lines = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let no = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut words = content.split_whitespace();
        let key = words.next().expect("non-empty");
        let l = Line {
            no,
            key,
            args: words.collect(),
        };
        match key {
            "seed" => {
                l.arity(1)?;
                c.seed = l.num(0, "seed")?;
            }
            "duration" => {
                l.arity(1)?;
                c.duration_ms = l.time(0)?;
                if c.duration_ms == 0 {
                    return err(no, "duration must be positive");
                }
            }
            "period" => {
                l.arity(1)?;
                c.period_ms = l.time(0)?;
                if c.period_ms == 0 {
                    return err(no, "period must be positive");
                }
            }
            "node" => {
                if !(3..=6).contains(&l.args.len()) {
                    return err(no, "usage: node <id> <x> <y> [border|mote] [boot <time>]");
                }
                let id = l.node(0)?;
                let x: f64 = l.num(1, "x coordinate")?;
                let y: f64 = l.num(2, "y coordinate")?;
                let border = match l.args.get(3) {
                    None | Some(&"mote") => false,
                    Some(&"border") => true,
                    Some(other) => return err(no, format!("node role must be `border` or `mote`, got `{other}`")),
                };
                let boot_ms = match l.args.get(4..) {
                    None | Some([]) => 0,
                    Some(["boot", _]) => l.time(5)?,
                    Some(_) => return err(no, "expected `boot <time>` after the role"),
                };
                if c.nodes.iter().any(|n| n.id == id) {
                    return err(no, format!("node {} declared twice", id.0));
                }
                c.nodes.push(NodeSpec {
                    id,
                    x,
                    y,
                    border,
                    boot_ms,
                });
                node_lines.push(no);
            }
            "grid" => {
                l.arity(3)?;
                let cols: u16 = l.num(0, "column count")?;
                let rows: u16 = l.num(1, "row count")?;
                let spacing: f64 = l.num(2, "spacing")?;
                if cols == 0 || rows == 0 || !spacing.is_finite() || spacing <= 0.0 {
                    return err(no, "grid needs positive columns, rows and spacing");
                }
                let Some(total) = cols.checked_mul(rows) else {
                    return err(no, "grid too large");
                };
                for i in 0..total {
                    let id = NodeId(i + 1);
                    if c.nodes.iter().any(|n| n.id == id) {
                        return err(no, format!("grid node {} already declared", id.0));
                    }
                    c.nodes.push(NodeSpec {
                        id,
                        x: f64::from(i % cols) * spacing,
                        y: f64::from(i / cols) * spacing,
                        border: i == 0,
                        boot_ms: 0,
                    });
                    node_lines.push(no);
                }
                c.range.get_or_insert(spacing);
            }
            "range" => {
                l.arity(1)?;
                let r: f64 = l.num(0, "range")?;
                if r.is_nan() || r < 0.0 {
                    return err(no, "range must be non-negative");
                }
                c.range = Some(r);
            }
            "loss" => {
                l.arity(1)?;
                loss = l.prob(0)?;
            }
            "latency" => {
                l.arity(1)?;
                latency = l.time(0)?;
            }
            "retries" => {
                l.arity(1)?;
                retries = l.num(0, "retry count")?;
            }
            "link" => {
                l.arity(3)?;
                c.links.push((l.node(0)?, l.node(1)?, l.prob(2)?, no));
            }
            "outage" => {
                l.arity(2)?;
                let (s, e) = (l.time(0)?, l.time(1)?);
                if s >= e {
                    return err(no, "outage end must be after its start");
                }
                if c.outages.last().is_some_and(|&(_, prev_end)| s < prev_end) {
                    return err(no, "outages must be sorted and disjoint");
                }
                c.outages.push((s, e));
            }
            "gateway_boot" => {
                l.arity(1)?;
                c.gateway_boot_ms = l.time(0)?;
            }
            "batch" => {
                l.arity(1)?;
                c.batch_size = l.num(0, "batch size")?;
                if c.batch_size == 0 {
                    return err(no, "batch size must be positive");
                }
            }
            "buffer_capacity" => {
                l.arity(1)?;
                c.buffer_capacity = Some(l.num(0, "capacity")?);
            }
            "serial_error" => {
                l.arity(1)?;
                c.serial_error = l.prob(0)?;
            }
            "prefix" => {
                l.arity(1)?;
                c.prefix = l.num(0, "prefix")?;
            }
            "drain" => {
                l.arity(1)?;
                c.drain_ms = l.time(0)?;
            }
            "jitter" => {
                l.arity(1)?;
                c.phase_jitter = match l.args[0] {
                    "on" => true,
                    "off" => false,
                    other => return err(no, format!("jitter must be `on` or `off`, got `{other}`")),
                };
            }
            "sever" => {
                l.arity(3)?;
                c.actions.push((l.time(2)?, Action::Sever(l.node(0)?, l.node(1)?), no));
            }
            "renumber" => {
                l.arity(2)?;
                let p: Prefix = l.num(1, "prefix")?;
                c.actions.push((l.time(0)?, Action::Renumber(p), no));
            }
            "restart" => {
                l.arity(1)?;
                c.actions.push((l.time(0)?, Action::RestartGateway, no));
            }
            "expect" => {
                l.arity(3)?;
                let op = match l.args[1] {
                    "==" => Comparison::Eq,
                    "!=" => Comparison::Ne,
                    "<" => Comparison::Lt,
                    "<=" => Comparison::Le,
                    ">" => Comparison::Gt,
                    ">=" => Comparison::Ge,
                    other => return err(no, format!("unknown comparison `{other}`")),
                };
                c.expectations.push(Expectation {
                    metric: l.args[0].to_string(),
                    op,
                    value: l.num(2, "expected value")?,
                    line: no,
                });
            }
            other => return err(no, format!("unknown key `{other}`")),
        }
    }

    c.default_link = LinkModel {
        loss,
        latency_ms: latency,
        max_retransmissions: retries,
    };
    validate(&mut c, &node_lines)?;
    Ok(c)
}

fn validate(c: &mut ScenarioConfig, node_lines: &[usize]) -> Result<(), ParseError> {
    let last = node_lines.last().copied().unwrap_or(0);
    if c.nodes.is_empty() {
        return err(last, "no nodes declared");
    }
    let borders: Vec<usize> = c
        .nodes
        .iter()
        .zip(node_lines)
        .filter(|(n, _)| n.border)
        .map(|(_, &l)| l)
        .collect();
    match borders.len() {
        0 => return err(last, "no border router declared"),
        1 => {}
        _ => return err(borders[1], "only one border router is supported"),
    }
    if !c.nodes.iter().any(|n| !n.border) {
        return err(last, "no motes declared");
    }
    let known = |n: NodeId| c.nodes.iter().any(|s| s.id == n);
    for &(a, b, _, line) in &c.links {
        for n in [a, b] {
            if !known(n) {
                return err(line, format!("link names unknown node {}", n.0));
            }
        }
        if a == b {
            return err(line, "link endpoints must differ");
        }
    }
    for &(_, action, line) in &c.actions {
        if let Action::Sever(a, b) = action {
            for n in [a, b] {
                if !known(n) {
                    return err(line, format!("sever names unknown node {}", n.0));
                }
            }
        }
    }
    let motes = c.mote_ids();
    for e in &c.expectations {
        if !super::is_metric_key(&e.metric, &motes) {
            return err(e.line, format!("unknown metric `{}`", e.metric));
        }
    }
    let topo = c.topology();
    let root = c.nodes.iter().find(|n| n.border).expect("one border").id;
    let ids: Vec<NodeId> = c.nodes.iter().map(|n| n.id).collect();
    for n in topo.unreachable_from(root, &ids) {
        c.warnings
            .push(format!("node {} has no radio path to the border router", n.0));
    }
    Ok(())
}
