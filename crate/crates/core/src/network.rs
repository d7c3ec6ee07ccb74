//! Wires motes, the radio mesh, the border router, the serial line, the
//! gateway and the cloud onto one event kernel.

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::border_router::{BorderRouter, ForwardOutcome, SerialLine, SerialMessage};
use crate::cloud::{CloudStore, OutageSchedule};
use crate::gateway::{
    capacity_for, Gateway, GatewayConfig, MemoryStore, ProduceOutcome, UploadBatch, DEFAULT_BATCH_SIZE,
};
use crate::ip::{gateway_address, mote_address, NodeId, Prefix};
use crate::kernel::{EntityId, EventHandle, Kernel, RngStreams, SimTime};
use crate::lowpan::default_budget;
use crate::lowpan::frag::{fragment, Reassembler};
use crate::lowpan::header::{compress, decrement_hop_limit, origin_suffix};
use crate::lowpan::link::{broadcast_delivered, transmit, LinkModel, LinkStats, Topology, TransmitOutcome};
use crate::mote::{Mote, MoteConfig, UdpRoute, DEFAULT_SAMPLE_PERIOD_MS, MAX_PHASE_JITTER_MS};
use crate::rpl::{check_dodag, Dest, DodagState, RplMessage, RplNode};

/// Gateway to cloud, one way.
pub const CLOUD_ONE_WAY_MS: u64 = 50;
/// Extra time allowed after sampling and outages end for queues to drain.
pub const DEFAULT_DRAIN_MS: u64 = 6 * 3600 * 1000;
pub const DEFAULT_PREFIX: Prefix = Prefix(0xfd00_0000_0000_0000);

const TAG_PHASE: u64 = 1;
const TAG_SIGNAL: u64 = 2;
const TAG_RPL: u64 = 3;
const TAG_LINK: u64 = 4;
const TAG_SERIAL: u64 = 5;

const GATEWAY_ENTITY: EntityId = EntityId(0x1_0000);
const CLOUD_ENTITY: EntityId = EntityId(0x1_0001);
const SERIAL_ENTITY: EntityId = EntityId(0x1_0002);
const CONTROL_ENTITY: EntityId = EntityId(0x1_0003);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeSpec {
    pub id: NodeId,
    pub x: f64,
    pub y: f64,
    pub border: bool,
    pub boot_ms: u64,
}

/// Mid-run interventions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Sever(NodeId, NodeId),
    SetLink(NodeId, NodeId, LinkModel),
    Renumber(Prefix),
    RestartGateway,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub seed: u64,
    pub nodes: Vec<NodeSpec>,
    pub topology: Topology,
    pub prefix: Prefix,
    pub period_ms: u64,
    pub duration_ms: u64,
    /// Draw each mote's sampling phase from `[0, 1000)` ms.
    pub phase_jitter: bool,
    pub gateway_boot_ms: u64,
    pub outages: OutageSchedule,
    pub batch_size: usize,
    /// Defaults to 24 h of production for the configured motes.
    pub buffer_capacity: Option<usize>,
    pub serial: SerialLine,
    pub cloud_one_way_ms: u64,
    pub drain_ms: u64,
    pub check_loops: bool,
    pub actions: Vec<(SimTime, Action)>,
}

impl NetworkConfig {
    pub fn new(nodes: Vec<NodeSpec>, topology: Topology, duration_ms: u64) -> Self {
        NetworkConfig {
            seed: 0,
            nodes,
            topology,
            prefix: DEFAULT_PREFIX,
            period_ms: DEFAULT_SAMPLE_PERIOD_MS,
            duration_ms,
            phase_jitter: true,
            gateway_boot_ms: 0,
            outages: OutageSchedule::none(),
            batch_size: DEFAULT_BATCH_SIZE,
            buffer_capacity: None,
            serial: SerialLine::default(),
            cloud_one_way_ms: CLOUD_ONE_WAY_MS,
            drain_ms: DEFAULT_DRAIN_MS,
            check_loops: true,
            actions: Vec::new(),
        }
    }

    pub fn mote_count(&self) -> usize {
        self.nodes.iter().filter(|n| !n.border).count()
    }

    pub fn border_router(&self) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.border).map(|n| n.id)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NetworkError {
    #[error("no border router")]
    NoBorderRouter,
    #[error("{0} border routers; exactly one is supported")]
    TooManyBorderRouters(usize),
    #[error("node {0} declared twice")]
    DuplicateNode(u16),
    #[error("link references unknown node {0}")]
    UnknownNode(u16),
    #[error("sampling period must be positive")]
    ZeroPeriod,
    #[error("duration must be positive")]
    ZeroDuration,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MoteCounters {
    pub generated: u64,
    pub no_route: u64,
    pub submitted: u64,
    /// Lost between the mote and the root.
    pub mesh_dropped: u64,
    pub at_root: u64,
    pub in_flight: u64,
}

impl MoteCounters {
    /// generated = no route + mesh dropped + reached root + in flight.
    pub fn conserved(&self) -> bool {
        self.generated == self.no_route + self.mesh_dropped + self.at_root + self.in_flight
            && self.submitted == self.generated - self.no_route
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct NetworkCounters {
    pub data: LinkStats,
    pub control: LinkStats,
    pub per_link: BTreeMap<(NodeId, NodeId), LinkStats>,
    pub relay_no_route: u64,
    pub hop_limit_drops: u64,
    pub link_missing: u64,
    pub frame_errors: u64,
    pub serial_bytes_corrupted: u64,
    pub serial_dropped_before_boot: u64,
    pub loop_checks: u64,
    pub loop_violations: u64,
    pub first_violation: Option<String>,
    pub root_init_at: Option<SimTime>,
    pub converged_at: Option<SimTime>,
}

impl NetworkCounters {
    pub fn convergence_ms(&self) -> Option<u64> {
        Some(self.converged_at? - self.root_init_at?)
    }
}

#[derive(Debug, Clone)]
enum Ev {
    Boot(NodeId),
    Sample(NodeId),
    DioTimer(NodeId),
    DisTimer(NodeId),
    ParentCheck(NodeId),
    Rpl { to: NodeId, msg: RplMessage },
    Frame { to: NodeId, from: NodeId, payload: Vec<u8> },
    ReassemblyTimeout(NodeId),
    SerialToGateway(Vec<u8>),
    SerialToRouter(Vec<u8>),
    SerialTxDone,
    GatewayBoot,
    ConsumerWake,
    CloudRequest(UploadBatch),
    UploadResponse { batch: UploadBatch, acked: bool },
    CloudLinkUp,
    Act(Action),
}

#[derive(Debug)]
struct Slot {
    rpl: RplNode,
    mote: Option<Mote>,
    reasm: Reassembler,
    booted: bool,
    frag_tag: u16,
    dio: Option<(SimTime, EventHandle)>,
    dis: Option<(SimTime, EventHandle)>,
    parent_check: Option<SimTime>,
    reasm_timer: Option<SimTime>,
    counters: MoteCounters,
}

pub struct Network {
    config: NetworkConfig,
    kernel: Kernel<Ev>,
    rngs: RngStreams,
    nodes: BTreeMap<NodeId, Slot>,
    root: NodeId,
    router: BorderRouter,
    gateway: Gateway<MemoryStore>,
    gateway_up: bool,
    cloud: CloudStore,
    topology: Topology,
    counters: NetworkCounters,
    finished_at: Option<SimTime>,
}

fn entity(n: NodeId) -> EntityId {
    EntityId(u32::from(n.0))
}

impl Network {
    pub fn new(config: NetworkConfig) -> Result<Self, NetworkError> {
        if config.period_ms == 0 {
            return Err(NetworkError::ZeroPeriod);
        }
        if config.duration_ms == 0 {
            return Err(NetworkError::ZeroDuration);
        }
        let borders: Vec<_> = config.nodes.iter().filter(|n| n.border).collect();
        let root = match borders.len() {
            0 => return Err(NetworkError::NoBorderRouter),
            1 => borders[0].id,
            n => return Err(NetworkError::TooManyBorderRouters(n)),
        };
        let mut rngs = RngStreams::new(config.seed);
        let mut nodes = BTreeMap::new();
        for spec in &config.nodes {
            let mote = (!spec.border).then(|| {
                let phase = if config.phase_jitter {
                    rngs.stream(TAG_PHASE, u64::from(spec.id.0), 0)
                        .random_range(0..MAX_PHASE_JITTER_MS)
                } else {
                    0
                };
                let window = config.duration_ms.saturating_sub(spec.boot_ms);
                Mote::new(
                    spec.id,
                    MoteConfig {
                        period_ms: config.period_ms,
                        phase_ms: spec.boot_ms + phase,
                        sample_limit: Some(window / config.period_ms),
                        ..MoteConfig::default()
                    },
                )
            });
            let slot = Slot {
                rpl: RplNode::new(spec.id, spec.border),
                mote,
                reasm: Reassembler::new(),
                booted: false,
                frag_tag: 0,
                dio: None,
                dis: None,
                parent_check: None,
                reasm_timer: None,
                counters: MoteCounters::default(),
            };
            if nodes.insert(spec.id, slot).is_some() {
                return Err(NetworkError::DuplicateNode(spec.id.0));
            }
        }
        for (a, b, _) in config.topology.links() {
            for n in [a, b] {
                if !nodes.contains_key(&n) {
                    return Err(NetworkError::UnknownNode(n.0));
                }
            }
        }
        for (_, action) in &config.actions {
            if let Action::Sever(a, b) | Action::SetLink(a, b, _) = *action {
                for n in [a, b] {
                    if !nodes.contains_key(&n) {
                        return Err(NetworkError::UnknownNode(n.0));
                    }
                }
            }
        }

        let capacity = config
            .buffer_capacity
            .unwrap_or_else(|| capacity_for(config.mote_count()));
        let gateway = Gateway::new(
            GatewayConfig {
                prefix: config.prefix,
                capacity,
                batch_size: config.batch_size,
            },
            MemoryStore::default(),
        )
        .expect("empty in-memory journal opens");

        let mut kernel = Kernel::new();
        for spec in &config.nodes {
            kernel
                .schedule(SimTime(spec.boot_ms), entity(spec.id), Ev::Boot(spec.id))
                .expect("future");
        }
        kernel
            .schedule(SimTime(config.gateway_boot_ms), GATEWAY_ENTITY, Ev::GatewayBoot)
            .expect("future");
        for &(_, end) in config.outages.windows() {
            kernel.schedule(end, GATEWAY_ENTITY, Ev::CloudLinkUp).expect("future");
        }
        for &(at, action) in &config.actions {
            kernel.schedule(at, CONTROL_ENTITY, Ev::Act(action)).expect("future");
        }

        Ok(Network {
            cloud: CloudStore::new(config.outages.clone()),
            topology: config.topology.clone(),
            router: BorderRouter::new(root),
            gateway,
            gateway_up: false,
            root,
            nodes,
            rngs,
            kernel,
            counters: NetworkCounters::default(),
            finished_at: None,
            config,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn now(&self) -> SimTime {
        self.kernel.now()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn kernel_digest(&self) -> u64 {
        self.kernel.digest().value()
    }

    pub fn events_dispatched(&self) -> u64 {
        self.kernel.dispatched()
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn topology_mut(&mut self) -> &mut Topology {
        &mut self.topology
    }

    pub fn rpl(&self, n: NodeId) -> Option<&RplNode> {
        self.nodes.get(&n).map(|s| &s.rpl)
    }

    pub fn rpl_states(&self) -> impl Iterator<Item = &DodagState> {
        self.nodes.values().map(|s| s.rpl.state())
    }

    pub fn mote(&self, n: NodeId) -> Option<&Mote> {
        self.nodes.get(&n).and_then(|s| s.mote.as_ref())
    }

    pub fn motes(&self) -> impl Iterator<Item = &Mote> {
        self.nodes.values().filter_map(|s| s.mote.as_ref())
    }

    pub fn mote_counters(&self) -> BTreeMap<NodeId, MoteCounters> {
        self.nodes
            .iter()
            .filter(|(_, s)| s.mote.is_some())
            .map(|(&n, s)| (n, s.counters))
            .collect()
    }

    pub fn reassembly_stats(&self, n: NodeId) -> Option<crate::lowpan::frag::ReassemblyStats> {
        self.nodes.get(&n).map(|s| s.reasm.stats())
    }

    pub fn border_router(&self) -> &BorderRouter {
        &self.router
    }

    pub fn gateway(&self) -> &Gateway<MemoryStore> {
        &self.gateway
    }

    pub fn cloud(&self) -> &CloudStore {
        &self.cloud
    }

    pub fn counters(&self) -> &NetworkCounters {
        &self.counters
    }

    pub fn finished_at(&self) -> Option<SimTime> {
        self.finished_at
    }

    /// Expected sample count per mote: what each one actually generated.
    pub fn expected_counts(&self) -> BTreeMap<u16, u32> {
        self.motes().map(|m| (m.id().0, m.stats().generated as u32)).collect()
    }

    fn mesh_in_flight(&self) -> u64 {
        self.nodes.values().map(|s| s.counters.in_flight).sum()
    }

    /// Every mote is done sampling and nothing is queued anywhere downstream.
    pub fn is_quiescent(&self) -> bool {
        self.motes().all(|m| m.next_sample_at().is_none())
            && self.mesh_in_flight() == 0
            && self.router.queue_len() == 0
            && !self.router.is_transmitting()
            && self.gateway.is_quiescent()
    }

    /// Latest time the run may continue to.
    pub fn drain_deadline(&self) -> SimTime {
        let base = self
            .config
            .outages
            .last_end()
            .map_or(self.config.duration_ms, |e| e.as_millis().max(self.config.duration_ms));
        let latest_sample = self
            .motes()
            .map(|m| {
                let c = m.config();
                c.phase_ms + c.sample_limit.unwrap_or(0) * c.period_ms
            })
            .max()
            .unwrap_or(0);
        SimTime(base.max(latest_sample) + self.config.drain_ms)
    }

    /// Process every event up to and including `end`.
    pub fn run_until(&mut self, end: SimTime) {
        while let Some(ev) = self.kernel.pop_until(end) {
            self.dispatch(ev.payload);
        }
        self.kernel.advance_to(end);
    }

    /// Run through the sampling window, then until everything has drained
    /// (or the drain deadline passes). Returns the stop time.
    pub fn run(&mut self) -> SimTime {
        let sampling_end = SimTime(self.config.duration_ms);
        let deadline = self.drain_deadline();
        while let Some(ev) = self.kernel.pop_until(deadline) {
            self.dispatch(ev.payload);
            if self.kernel.now() >= sampling_end && self.is_quiescent() {
                break;
            }
        }
        let t = self.kernel.now().max(sampling_end);
        self.kernel.advance_to(t);
        self.finished_at = Some(t);
        t
    }

    fn dispatch(&mut self, ev: Ev) {
        let now = self.kernel.now();
        match ev {
            Ev::Boot(n) => self.on_boot(n, now),
            Ev::Sample(n) => self.on_sample(n, now),
            Ev::DioTimer(n) => {
                if let Some(s) = self.nodes.get_mut(&n) {
                    s.dio = None;
                }
                let rng = self.rngs.stream(TAG_RPL, u64::from(n.0), 0);
                let out = self
                    .nodes
                    .get_mut(&n)
                    .map(|s| s.rpl.on_dio_timer(now, rng))
                    .unwrap_or_default();
                self.emit(n, out);
                self.sync_timers(n);
            }
            Ev::DisTimer(n) => {
                let out = match self.nodes.get_mut(&n) {
                    Some(s) => {
                        s.dis = None;
                        s.rpl.on_dis_timer(now)
                    }
                    None => Vec::new(),
                };
                self.emit(n, out);
                self.sync_timers(n);
            }
            Ev::ParentCheck(n) => {
                if let Some(s) = self.nodes.get_mut(&n) {
                    s.parent_check = None;
                }
                let rng = self.rngs.stream(TAG_RPL, u64::from(n.0), 0);
                let out = self
                    .nodes
                    .get_mut(&n)
                    .map(|s| s.rpl.on_parent_check(now, rng))
                    .unwrap_or_default();
                self.emit(n, out);
                self.sync_timers(n);
                self.after_rpl_change(now);
            }
            Ev::Rpl { to, msg } => {
                let Some(s) = self.nodes.get_mut(&to) else { return };
                if !s.booted {
                    return;
                }
                let rng = self.rngs.stream(TAG_RPL, u64::from(to.0), 0);
                let out = s.rpl.handle(msg, now, rng);
                self.emit(to, out);
                self.sync_timers(to);
                self.after_rpl_change(now);
            }
            Ev::Frame { to, from, payload } => self.on_frame(to, from, payload, now),
            Ev::ReassemblyTimeout(n) => {
                if let Some(s) = self.nodes.get_mut(&n) {
                    s.reasm_timer = None;
                    s.reasm.expire(now);
                }
                self.sync_reassembly(n);
            }
            Ev::SerialTxDone => {
                self.router.transmission_done();
                self.pump_serial();
            }
            Ev::SerialToGateway(bytes) => {
                if !self.gateway_up {
                    self.counters.serial_dropped_before_boot += 1;
                    return;
                }
                let outcomes = self
                    .gateway
                    .on_serial_bytes(&bytes, now)
                    .expect("in-memory journal does not fail");
                debug_assert!(
                    outcomes.iter().all(|o| !matches!(o, ProduceOutcome::Malformed(_)))
                        || self.config.serial.byte_error > 0.0
                );
                self.try_upload(now);
            }
            Ev::SerialToRouter(bytes) => {
                for msg in self.router.on_serial_bytes(&bytes) {
                    if let SerialMessage::Prefix(p) = msg {
                        let root = self.root;
                        let rng = self.rngs.stream(TAG_RPL, u64::from(root.0), 0);
                        let slot = self.nodes.get_mut(&root).expect("root exists");
                        if self.router.accept_prefix(p, &mut slot.rpl, now, rng).is_ok() {
                            self.counters.root_init_at.get_or_insert(now);
                        }
                        self.sync_timers(root);
                        self.after_rpl_change(now);
                    }
                }
            }
            Ev::GatewayBoot => {
                self.gateway_up = true;
                self.send_to_router(self.gateway.push_prefix());
                self.try_upload(now);
            }
            Ev::ConsumerWake => self.try_upload(now),
            Ev::CloudRequest(batch) => {
                let acked = self.cloud.ingest_batch(&batch, now).is_ok();
                self.kernel.schedule_in(
                    self.config.cloud_one_way_ms,
                    GATEWAY_ENTITY,
                    Ev::UploadResponse { batch, acked },
                );
            }
            Ev::UploadResponse { batch, acked } => {
                let retry = self
                    .gateway
                    .on_upload_result(&batch, acked, now)
                    .expect("in-memory journal does not fail");
                if let Some(t) = retry {
                    self.kernel
                        .schedule(t, GATEWAY_ENTITY, Ev::ConsumerWake)
                        .expect("future");
                }
                self.try_upload(now);
            }
            Ev::CloudLinkUp => {
                self.gateway.on_link_up();
                self.try_upload(now);
            }
            Ev::Act(action) => self.apply(action, now),
        }
    }

    fn apply(&mut self, action: Action, now: SimTime) {
        match action {
            Action::Sever(a, b) => self.topology.remove(a, b),
            Action::SetLink(a, b, m) => self.topology.set(a, b, m),
            Action::Renumber(p) => {
                self.gateway.set_prefix(p);
                if self.gateway_up {
                    self.send_to_router(self.gateway.push_prefix());
                }
            }
            Action::RestartGateway => {
                self.gateway.restart().expect("in-memory journal reloads");
                self.try_upload(now);
            }
        }
    }

    fn send_to_router(&mut self, bytes: Vec<u8>) {
        self.kernel
            .schedule_in(self.config.serial.datagram_ms, SERIAL_ENTITY, Ev::SerialToRouter(bytes));
    }

    fn on_boot(&mut self, n: NodeId, now: SimTime) {
        let rng = self.rngs.stream(TAG_RPL, u64::from(n.0), 0);
        let Some(s) = self.nodes.get_mut(&n) else { return };
        s.booted = true;
        s.rpl.boot(now, rng);
        if let Some(t) = s.mote.as_ref().and_then(Mote::next_sample_at) {
            self.kernel.schedule(t, entity(n), Ev::Sample(n)).expect("future");
        }
        self.sync_timers(n);
    }

    fn on_sample(&mut self, n: NodeId, now: SimTime) {
        let rng = self.rngs.stream(TAG_SIGNAL, u64::from(n.0), 0);
        let Some(s) = self.nodes.get_mut(&n) else { return };
        let Some(mote) = s.mote.as_mut() else { return };
        let route = match (s.rpl.next_hop_up(), s.rpl.address_prefix()) {
            (Ok(_), Some(p)) => Some(UdpRoute {
                src: mote_address(p, n),
                dst: gateway_address(p),
            }),
            _ => None,
        };
        let prefix = s.rpl.state().prefix;
        let datagrams = mote.on_sample_timer(now, rng, route);
        s.counters.generated += 1;
        if route.is_none() {
            s.counters.no_route += 1;
        }
        if let Some(t) = mote.next_sample_at() {
            self.kernel.schedule(t, entity(n), Ev::Sample(n)).expect("future");
        }
        for d in datagrams {
            let s = self.nodes.get_mut(&n).expect("present");
            s.counters.submitted += 1;
            s.counters.in_flight += 1;
            let bytes = compress(&d, prefix.expect("route implies prefix")).expect("mesh addresses compress");
            self.send_up(n, bytes, now);
        }
    }

    fn drop_in_mesh(&mut self, bytes: &[u8]) {
        if let Some(origin) = origin_suffix(bytes) {
            if let Some(s) = self.nodes.get_mut(&NodeId(origin)) {
                s.counters.in_flight -= 1;
                s.counters.mesh_dropped += 1;
            }
        }
    }

    /// Forward a compressed datagram one hop toward the root.
    fn send_up(&mut self, from: NodeId, bytes: Vec<u8>, now: SimTime) {
        let slot = self.nodes.get_mut(&from).expect("sender exists");
        let Ok(next) = slot.rpl.next_hop_up() else {
            self.counters.relay_no_route += 1;
            self.drop_in_mesh(&bytes);
            return;
        };
        slot.frag_tag = slot.frag_tag.wrapping_add(1);
        let tag = slot.frag_tag;
        let Some(link) = self.topology.link(from, next).copied() else {
            self.counters.link_missing += 1;
            self.drop_in_mesh(&bytes);
            return;
        };
        let frames = fragment(&bytes, default_budget(), tag).expect("datagram within 6LoWPAN limits");
        let rng = self.rngs.stream(TAG_LINK, u64::from(from.0), u64::from(next.0));
        let mut scheduled = Vec::with_capacity(frames.len());
        let mut lost = false;
        for f in frames {
            let outcome = transmit(&link, rng);
            self.counters.data.record(outcome);
            self.counters.per_link.entry((from, next)).or_default().record(outcome);
            match outcome {
                TransmitOutcome::Delivered { delay_ms, .. } => scheduled.push((delay_ms, f)),
                TransmitOutcome::Dropped { .. } => {
                    lost = true;
                    break;
                }
            }
        }
        if !scheduled.is_empty() {
            self.nodes
                .get_mut(&from)
                .expect("sender exists")
                .rpl
                .on_link_ack(next, now);
        }
        if lost {
            self.drop_in_mesh(&bytes);
        }
        // fragments after a loss are never sent; ones before it still arrive
        for (delay, payload) in scheduled {
            self.kernel.schedule_in(
                delay,
                entity(next),
                Ev::Frame {
                    to: next,
                    from,
                    payload,
                },
            );
        }
    }

    fn on_frame(&mut self, to: NodeId, from: NodeId, payload: Vec<u8>, now: SimTime) {
        let Some(s) = self.nodes.get_mut(&to) else { return };
        if !s.booted {
            return;
        }
        let datagram = match s.reasm.accept(from, &payload, now) {
            Ok(Some(d)) => d,
            Ok(None) => {
                self.sync_reassembly(to);
                return;
            }
            Err(_) => {
                self.counters.frame_errors += 1;
                return;
            }
        };
        if to == self.root {
            if let Some(origin) = origin_suffix(&datagram).and_then(|o| self.nodes.get_mut(&NodeId(o))) {
                origin.counters.in_flight -= 1;
                origin.counters.at_root += 1;
            }
            if let ForwardOutcome::Queued { start_line: true } = self.router.forward_up(&datagram) {
                self.pump_serial();
            }
            return;
        }
        let mut datagram = datagram;
        match decrement_hop_limit(&mut datagram) {
            Some(h) if h > 0 => self.send_up(to, datagram, now),
            _ => {
                self.counters.hop_limit_drops += 1;
                self.drop_in_mesh(&datagram);
            }
        }
    }

    fn pump_serial(&mut self) {
        let Some(mut bytes) = self.router.start_transmission() else {
            return;
        };
        let rng = self.rngs.stream(TAG_SERIAL, 0, 0);
        self.counters.serial_bytes_corrupted += self.config.serial.corrupt(&mut bytes, rng) as u64;
        let d = self.config.serial.datagram_ms;
        self.kernel.schedule_in(d, SERIAL_ENTITY, Ev::SerialToGateway(bytes));
        self.kernel.schedule_in(d, SERIAL_ENTITY, Ev::SerialTxDone);
    }

    fn try_upload(&mut self, now: SimTime) {
        if !self.gateway_up {
            return;
        }
        if let Some(batch) = self.gateway.next_batch(now) {
            self.kernel
                .schedule_in(self.config.cloud_one_way_ms, CLOUD_ENTITY, Ev::CloudRequest(batch));
        }
    }

    /// Deliver RPL messages from `from` over the radio.
    fn emit(&mut self, from: NodeId, out: Vec<(Dest, RplMessage)>) {
        for (dest, msg) in out {
            match dest {
                Dest::Broadcast => {
                    let neighbours: Vec<(NodeId, LinkModel)> =
                        self.topology.neighbors(from).map(|(n, m)| (n, *m)).collect();
                    for (to, link) in neighbours {
                        let rng = self.rngs.stream(TAG_LINK, u64::from(from.0), u64::from(to.0));
                        let ok = broadcast_delivered(&link, rng);
                        self.counters.control.record_broadcast(ok);
                        if ok {
                            self.kernel
                                .schedule_in(link.latency_ms, entity(to), Ev::Rpl { to, msg });
                        }
                    }
                }
                Dest::Unicast(to) => {
                    let Some(link) = self.topology.link(from, to).copied() else {
                        self.counters.link_missing += 1;
                        continue;
                    };
                    let rng = self.rngs.stream(TAG_LINK, u64::from(from.0), u64::from(to.0));
                    let outcome = transmit(&link, rng);
                    self.counters.control.record(outcome);
                    if let TransmitOutcome::Delivered { delay_ms, .. } = outcome {
                        self.kernel.schedule_in(delay_ms, entity(to), Ev::Rpl { to, msg });
                    }
                }
            }
        }
    }

    /// Bring the kernel's timers in line with what the node wants.
    fn sync_timers(&mut self, n: NodeId) {
        let Some(s) = self.nodes.get_mut(&n) else { return };
        let want = s.rpl.dio_due();
        if s.dio.map(|d| d.0) != want {
            if let Some((_, h)) = s.dio.take() {
                self.kernel.cancel(h);
            }
            if let Some(t) = want {
                let h = self
                    .kernel
                    .schedule(t, entity(n), Ev::DioTimer(n))
                    .expect("trickle is not in the past");
                s.dio = Some((t, h));
            }
        }
        let want = s.rpl.dis_due();
        if s.dis.map(|d| d.0) != want {
            if let Some((_, h)) = s.dis.take() {
                self.kernel.cancel(h);
            }
            if let Some(t) = want {
                let h = self
                    .kernel
                    .schedule(t, entity(n), Ev::DisTimer(n))
                    .expect("DIS is not in the past");
                s.dis = Some((t, h));
            }
        }
        if s.parent_check.is_none() {
            if let Some(t) = s.rpl.parent_deadline() {
                let t = t.max(self.kernel.now());
                self.kernel.schedule(t, entity(n), Ev::ParentCheck(n)).expect("future");
                s.parent_check = Some(t);
            }
        }
    }

    fn sync_reassembly(&mut self, n: NodeId) {
        let Some(s) = self.nodes.get_mut(&n) else { return };
        if s.reasm_timer.is_none() {
            if let Some(t) = s.reasm.next_deadline() {
                self.kernel
                    .schedule(t, entity(n), Ev::ReassemblyTimeout(n))
                    .expect("future");
                s.reasm_timer = Some(t);
            }
        }
    }

    fn after_rpl_change(&mut self, now: SimTime) {
        if self.counters.converged_at.is_none()
            && self.counters.root_init_at.is_some()
            && self.nodes.values().all(|s| s.rpl.state().joined())
        {
            self.counters.converged_at = Some(now);
        }
        if !self.config.check_loops {
            return;
        }
        self.counters.loop_checks += 1;
        let report = check_dodag(self.root, self.nodes.values().map(|s| s.rpl.state()));
        if !report.is_loop_free() {
            self.counters.loop_violations += 1;
            if self.counters.first_violation.is_none() {
                self.counters.first_violation = Some(format!(
                    "t={} cycles={:?} rank_violations={:?} orphans={:?}",
                    now.as_millis(),
                    report.cycles,
                    report.rank_violations,
                    report.orphans
                ));
            }
        }
    }
}
