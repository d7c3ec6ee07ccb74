use std::collections::{BTreeMap, BTreeSet};
use std::io;

use crate::ip::NodeId;
use crate::network::Network;

/// Keys of the flat summary, besides the per-mote `mote.<id>.<field>` ones.
pub const SUMMARY_KEYS: &[&str] = &[
    "at_root",
    "buffer_capacity",
    "buffer_max_depth",
    "completeness",
    "control_frames",
    "convergence_ms",
    "delivered",
    "duplicates_suppressed",
    "events",
    "expected",
    "finished_at_ms",
    "frame_attempts",
    "frame_losses",
    "frames",
    "frames_delivered",
    "frames_dropped",
    "gateway_malformed",
    "generated",
    "in_flight",
    "invariant_ack_safety",
    "invariant_conservation",
    "invariant_exactly_once",
    "invariant_loop_free",
    "invariants_failed",
    "journal_bytes",
    "journal_entries",
    "journal_unacked",
    "loop_checks",
    "loop_violations",
    "mesh_dropped",
    "missing",
    "motes",
    "no_route",
    "replay_batches",
    "replayed_records",
    "router_dropped_overflow",
    "router_max_queue",
    "seed",
    "serial_rejected",
    "shed",
    "stored_duplicates",
    "submitted",
    "trace_digest",
    "uploads_acked",
    "uploads_failed",
    "uploads_sent",
    "warnings",
];

pub const MOTE_METRIC_KEYS: &[&str] = &[
    "completeness",
    "delivered",
    "generated",
    "missing",
    "no_route",
    "submitted",
];

/// Whether `key` names a summary value for a run over `motes`.
pub fn is_metric_key(key: &str, motes: &[NodeId]) -> bool {
    if SUMMARY_KEYS.contains(&key) {
        return true;
    }
    let mut parts = key.split('.');
    match (parts.next(), parts.next(), parts.next(), parts.next()) {
        (Some("mote"), Some(id), Some(field), None) => {
            id.parse::<u16>().is_ok_and(|id| motes.contains(&NodeId(id))) && MOTE_METRIC_KEYS.contains(&field)
        }
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoteMetrics {
    pub id: u16,
    pub generated: u64,
    pub no_route: u64,
    pub submitted: u64,
    pub mesh_dropped: u64,
    pub at_root: u64,
    pub in_flight: u64,
    /// Distinct records stored at the cloud.
    pub delivered: u64,
    pub missing: u64,
    pub duplicates_suppressed: u64,
    /// Final DODAG rank, `None` when detached.
    pub rank: Option<u16>,
    pub parent: Option<u16>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkMetrics {
    pub from: u16,
    pub to: u16,
    pub frames: u64,
    pub attempts: u64,
    pub lost_attempts: u64,
    pub delivered: u64,
    pub dropped: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub seed: u64,
    pub finished_at_ms: u64,
    pub events: u64,
    pub trace_digest: u64,
    pub motes: Vec<MoteMetrics>,
    pub links: Vec<LinkMetrics>,
    pub expected: u64,
    pub delivered: u64,
    pub buffer_max_depth: usize,
    pub buffer_capacity: usize,
    pub shed: u64,
    pub journal_entries: usize,
    pub journal_bytes: u64,
    pub journal_unacked: usize,
    pub uploads_sent: u64,
    pub uploads_acked: u64,
    pub uploads_failed: u64,
    pub replay_batches: u64,
    pub replayed_records: u64,
    pub duplicates_suppressed: u64,
    pub stored_duplicates: u64,
    pub router_dropped_overflow: u64,
    pub router_max_queue: usize,
    pub serial_rejected: u64,
    pub gateway_malformed: u64,
    pub control_frames: u64,
    pub convergence_ms: Option<u64>,
    pub loop_checks: u64,
    pub loop_violations: u64,
    pub warnings: usize,
    pub conservation: bool,
    pub loop_free: bool,
    pub ack_safety: bool,
    pub exactly_once: bool,
}

impl RunMetrics {
    pub fn collect(net: &Network, warnings: usize) -> Self {
        let cloud = net.cloud();
        let gateway = net.gateway();
        let journal = gateway.journal();
        let report = cloud.completeness_report(&net.expected_counts());
        let counters = net.counters();

        let motes: Vec<MoteMetrics> = net
            .mote_counters()
            .into_iter()
            .map(|(id, c)| {
                let comp = &report[&id.0];
                let state = net.rpl(id).expect("mote has an RPL node").state();
                MoteMetrics {
                    id: id.0,
                    generated: c.generated,
                    no_route: c.no_route,
                    submitted: c.submitted,
                    mesh_dropped: c.mesh_dropped,
                    at_root: c.at_root,
                    in_flight: c.in_flight,
                    delivered: u64::from(comp.received + comp.unexpected),
                    missing: comp.missing.len() as u64,
                    duplicates_suppressed: comp.duplicates_suppressed,
                    rank: state.joined().then_some(state.rank.0),
                    parent: state.preferred_parent.map(|p| p.0),
                }
            })
            .collect();

        let links = counters
            .per_link
            .iter()
            .map(|(&(a, b), s)| LinkMetrics {
                from: a.0,
                to: b.0,
                frames: s.frames,
                attempts: s.attempts,
                lost_attempts: s.lost_attempts,
                delivered: s.delivered,
                dropped: s.dropped,
            })
            .collect();

        let distinct: BTreeSet<(u16, u32)> = cloud.iter().map(|r| (r.mote_id, r.counter)).collect();
        let ack_safety = (0..journal.len() as u64).filter(|&i| journal.is_acked(i)).all(|i| {
            let e = journal.get(i).expect("index in range");
            cloud.get(e.mote_id, e.record.counter).is_some()
        });
        let router = net.border_router().stats();
        let gw = gateway.stats();
        let conservation = motes.iter().all(|m| {
            m.generated == m.no_route + m.mesh_dropped + m.at_root + m.in_flight
                && m.submitted == m.generated - m.no_route
                && m.delivered <= m.at_root
        }) && router.conserved()
            && gateway.conserved();

        RunMetrics {
            seed: net.config().seed,
            finished_at_ms: net.finished_at().unwrap_or(net.now()).as_millis(),
            events: net.events_dispatched(),
            trace_digest: net.kernel_digest(),
            expected: report.values().map(|c| u64::from(c.expected)).sum(),
            delivered: distinct.len() as u64,
            motes,
            links,
            buffer_max_depth: gateway.max_depth(),
            buffer_capacity: gateway.config().capacity,
            shed: gw.shed,
            journal_entries: journal.len(),
            journal_bytes: journal.size_bytes(),
            journal_unacked: journal.unacked_count(),
            uploads_sent: gw.uploads_sent,
            uploads_acked: gw.uploads_acked,
            uploads_failed: gw.uploads_failed,
            replay_batches: gw.replay_batches,
            replayed_records: gw.replayed_records,
            duplicates_suppressed: cloud.stats().duplicates_suppressed,
            stored_duplicates: (cloud.len() - distinct.len()) as u64,
            router_dropped_overflow: router.dropped_overflow,
            router_max_queue: router.max_queue,
            serial_rejected: router.serial_rejected,
            gateway_malformed: gw.malformed,
            control_frames: counters.control.frames,
            convergence_ms: counters.convergence_ms(),
            loop_checks: counters.loop_checks,
            loop_violations: counters.loop_violations,
            warnings,
            conservation,
            loop_free: counters.loop_violations == 0,
            ack_safety,
            exactly_once: cloud.len() == distinct.len(),
        }
    }

    pub fn invariants(&self) -> [(&'static str, bool); 4] {
        [
            ("invariant_ack_safety", self.ack_safety),
            ("invariant_conservation", self.conservation),
            ("invariant_exactly_once", self.exactly_once),
            ("invariant_loop_free", self.loop_free),
        ]
    }

    pub fn invariants_hold(&self) -> bool {
        self.invariants().iter().all(|(_, ok)| *ok)
    }

    pub fn completeness(&self) -> f64 {
        if self.expected == 0 {
            1.0
        } else {
            self.motes.iter().map(|m| m.generated - m.missing).sum::<u64>() as f64 / self.expected as f64
        }
    }

    fn frame_totals(&self) -> (u64, u64, u64, u64, u64) {
        self.links.iter().fold((0, 0, 0, 0, 0), |t, l| {
            (
                t.0 + l.frames,
                t.1 + l.attempts,
                t.2 + l.lost_attempts,
                t.3 + l.delivered,
                t.4 + l.dropped,
            )
        })
    }

    /// Flat sorted key/value view; every value is deterministic text.
    pub fn summary(&self) -> BTreeMap<String, String> {
        let mut s = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            s.insert(k.to_string(), v);
        };
        let sum = |f: fn(&MoteMetrics) -> u64| self.motes.iter().map(f).sum::<u64>().to_string();
        let (frames, attempts, losses, delivered, dropped) = self.frame_totals();

        put("seed", self.seed.to_string());
        put("finished_at_ms", self.finished_at_ms.to_string());
        put("events", self.events.to_string());
        put("trace_digest", format!("{:016x}", self.trace_digest));
        put("motes", self.motes.len().to_string());
        put("generated", sum(|m| m.generated));
        put("no_route", sum(|m| m.no_route));
        put("submitted", sum(|m| m.submitted));
        put("mesh_dropped", sum(|m| m.mesh_dropped));
        put("at_root", sum(|m| m.at_root));
        put("in_flight", sum(|m| m.in_flight));
        put("expected", self.expected.to_string());
        put("delivered", self.delivered.to_string());
        put("missing", sum(|m| m.missing));
        put("completeness", format!("{:.6}", self.completeness()));
        put("frames", frames.to_string());
        put("frame_attempts", attempts.to_string());
        put("frame_losses", losses.to_string());
        put("frames_delivered", delivered.to_string());
        put("frames_dropped", dropped.to_string());
        put("control_frames", self.control_frames.to_string());
        put("buffer_max_depth", self.buffer_max_depth.to_string());
        put("buffer_capacity", self.buffer_capacity.to_string());
        put("shed", self.shed.to_string());
        put("journal_entries", self.journal_entries.to_string());
        put("journal_bytes", self.journal_bytes.to_string());
        put("journal_unacked", self.journal_unacked.to_string());
        put("uploads_sent", self.uploads_sent.to_string());
        put("uploads_acked", self.uploads_acked.to_string());
        put("uploads_failed", self.uploads_failed.to_string());
        put("replay_batches", self.replay_batches.to_string());
        put("replayed_records", self.replayed_records.to_string());
        put("duplicates_suppressed", self.duplicates_suppressed.to_string());
        put("stored_duplicates", self.stored_duplicates.to_string());
        put("router_dropped_overflow", self.router_dropped_overflow.to_string());
        put("router_max_queue", self.router_max_queue.to_string());
        put("serial_rejected", self.serial_rejected.to_string());
        put("gateway_malformed", self.gateway_malformed.to_string());
        put(
            "convergence_ms",
            self.convergence_ms
                .map_or_else(|| "none".to_string(), |c| c.to_string()),
        );
        put("loop_checks", self.loop_checks.to_string());
        put("loop_violations", self.loop_violations.to_string());
        put("warnings", self.warnings.to_string());
        for (k, ok) in self.invariants() {
            put(k, if ok { "pass" } else { "fail" }.to_string());
        }
        put(
            "invariants_failed",
            self.invariants().iter().filter(|(_, ok)| !ok).count().to_string(),
        );
        for m in &self.motes {
            let p = format!("mote.{}.", m.id);
            put(&format!("{p}generated"), m.generated.to_string());
            put(&format!("{p}no_route"), m.no_route.to_string());
            put(&format!("{p}submitted"), m.submitted.to_string());
            put(&format!("{p}delivered"), m.delivered.to_string());
            put(&format!("{p}missing"), m.missing.to_string());
            let ratio = if m.generated == 0 {
                1.0
            } else {
                (m.generated - m.missing) as f64 / m.generated as f64
            };
            put(&format!("{p}completeness"), format!("{ratio:.6}"));
        }
        s
    }

    pub fn write_motes_csv<W: io::Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "mote_id",
            "generated",
            "no_route",
            "submitted",
            "mesh_dropped",
            "at_root",
            "in_flight",
            "delivered",
            "missing",
            "duplicates_suppressed",
            "rank",
            "parent",
        ])?;
        let opt = |v: Option<u16>| v.map_or_else(String::new, |v| v.to_string());
        for m in &self.motes {
            w.write_record([
                m.id.to_string(),
                m.generated.to_string(),
                m.no_route.to_string(),
                m.submitted.to_string(),
                m.mesh_dropped.to_string(),
                m.at_root.to_string(),
                m.in_flight.to_string(),
                m.delivered.to_string(),
                m.missing.to_string(),
                m.duplicates_suppressed.to_string(),
                opt(m.rank),
                opt(m.parent),
            ])?;
        }
        w.flush()
    }

    pub fn write_links_csv<W: io::Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "from",
            "to",
            "frames",
            "attempts",
            "lost_attempts",
            "delivered",
            "dropped",
        ])?;
        for l in &self.links {
            w.write_record([
                l.from.to_string(),
                l.to.to_string(),
                l.frames.to_string(),
                l.attempts.to_string(),
                l.lost_attempts.to_string(),
                l.delivered.to_string(),
                l.dropped.to_string(),
            ])?;
        }
        w.flush()
    }
}
