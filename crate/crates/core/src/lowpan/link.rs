//! Lossy radio links and the unit-disk topology they are drawn from.

use std::collections::BTreeMap;

use rand::Rng;
use thiserror::Error;

use crate::ip::NodeId;

/// IEEE 802.15.4 PHY frame budget.
pub const MAX_FRAME_LEN: usize = 127;
/// Worst-case MAC header plus FCS.
pub const MAC_OVERHEAD: usize = 25;
/// Room left for the 6LoWPAN payload in one frame.
pub const FRAME_PAYLOAD: usize = MAX_FRAME_LEN - MAC_OVERHEAD;

pub const DEFAULT_LATENCY_MS: u64 = 5;
pub const DEFAULT_MAX_RETRANSMISSIONS: u32 = 3;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("frame of {0} bytes exceeds the 127-byte budget")]
    TooLong(usize),
}

/// One link-layer frame. Construction enforces the size budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    src: NodeId,
    dst: NodeId,
    payload: Vec<u8>,
}

impl Frame {
    pub fn new(src: NodeId, dst: NodeId, payload: Vec<u8>) -> Result<Self, FrameError> {
        let len = MAC_OVERHEAD + payload.len();
        if len > MAX_FRAME_LEN {
            return Err(FrameError::TooLong(len));
        }
        Ok(Frame { src, dst, payload })
    }

    pub fn src(&self) -> NodeId {
        self.src
    }

    pub fn dst(&self) -> NodeId {
        self.dst
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn into_payload(self) -> Vec<u8> {
        self.payload
    }

    /// On-air length including MAC overhead.
    pub fn len(&self) -> usize {
        MAC_OVERHEAD + self.payload.len()
    }

    pub fn is_empty(&self) -> bool {
        self.payload.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkModel {
    pub loss: f64,
    pub latency_ms: u64,
    pub max_retransmissions: u32,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel {
            loss: 0.0,
            latency_ms: DEFAULT_LATENCY_MS,
            max_retransmissions: DEFAULT_MAX_RETRANSMISSIONS,
        }
    }
}

impl LinkModel {
    pub fn with_loss(loss: f64) -> Self {
        LinkModel {
            loss,
            ..Default::default()
        }
    }

    /// Probability that a unicast frame gets through within the retry budget.
    pub fn delivery_probability(&self) -> f64 {
        1.0 - self.loss.powi(self.max_retransmissions as i32 + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransmitOutcome {
    /// Acknowledged on attempt `attempts`, arriving `delay_ms` after the send.
    Delivered { attempts: u32, delay_ms: u64 },
    /// Every attempt lost.
    Dropped { attempts: u32 },
}

impl TransmitOutcome {
    pub fn attempts(&self) -> u32 {
        match *self {
            TransmitOutcome::Delivered { attempts, .. } | TransmitOutcome::Dropped { attempts } => attempts,
        }
    }
}

/// Unicast with per-hop acknowledgment: up to `max_retransmissions + 1`
/// attempts, each lost independently with probability `loss`.
pub fn transmit<R: Rng + ?Sized>(link: &LinkModel, rng: &mut R) -> TransmitOutcome {
    let max_attempts = link.max_retransmissions + 1;
    for attempt in 1..=max_attempts {
        if !rng.random_bool(link.loss.clamp(0.0, 1.0)) {
            return TransmitOutcome::Delivered {
                attempts: attempt,
                delay_ms: u64::from(attempt) * link.latency_ms,
            };
        }
    }
    TransmitOutcome::Dropped { attempts: max_attempts }
}

/// Broadcast: a single unacknowledged attempt.
pub fn broadcast_delivered<R: Rng + ?Sized>(link: &LinkModel, rng: &mut R) -> bool {
    !rng.random_bool(link.loss.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub frames: u64,
    pub attempts: u64,
    pub lost_attempts: u64,
    pub delivered: u64,
    pub dropped: u64,
}

impl LinkStats {
    pub fn record(&mut self, outcome: TransmitOutcome) {
        self.frames += 1;
        self.attempts += u64::from(outcome.attempts());
        match outcome {
            TransmitOutcome::Delivered { attempts, .. } => {
                self.delivered += 1;
                self.lost_attempts += u64::from(attempts - 1);
            }
            TransmitOutcome::Dropped { attempts } => {
                self.dropped += 1;
                self.lost_attempts += u64::from(attempts);
            }
        }
    }

    pub fn record_broadcast(&mut self, delivered: bool) {
        self.attempts += 1;
        if !delivered {
            self.lost_attempts += 1;
        }
    }
}

/// Directed link table. Unit-disk construction makes it symmetric; explicit
/// per-direction overrides are allowed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Topology {
    links: BTreeMap<(NodeId, NodeId), LinkModel>,
}

impl Topology {
    pub fn new() -> Self {
        Self::default()
    }

    /// Link every pair within `range` of each other.
    pub fn unit_disk(positions: &[(NodeId, f64, f64)], range: f64, model: LinkModel) -> Self {
        let mut t = Topology::new();
        for (i, &(a, ax, ay)) in positions.iter().enumerate() {
            for &(b, bx, by) in &positions[i + 1..] {
                if (ax - bx).hypot(ay - by) <= range + 1e-9 {
                    t.set(a, b, model);
                }
            }
        }
        t
    }

    /// Set both directions.
    pub fn set(&mut self, a: NodeId, b: NodeId, model: LinkModel) {
        self.links.insert((a, b), model);
        self.links.insert((b, a), model);
    }

    pub fn set_directed(&mut self, from: NodeId, to: NodeId, model: LinkModel) {
        self.links.insert((from, to), model);
    }

    pub fn remove(&mut self, a: NodeId, b: NodeId) {
        self.links.remove(&(a, b));
        self.links.remove(&(b, a));
    }

    pub fn link(&self, from: NodeId, to: NodeId) -> Option<&LinkModel> {
        self.links.get(&(from, to))
    }

    /// Nodes `from` can transmit to, in ascending id order.
    pub fn neighbors(&self, from: NodeId) -> impl Iterator<Item = (NodeId, &LinkModel)> {
        self.links
            .range((from, NodeId(0))..=(from, NodeId(u16::MAX)))
            .map(|(&(_, to), m)| (to, m))
    }

    pub fn links(&self) -> impl Iterator<Item = (NodeId, NodeId, &LinkModel)> {
        self.links.iter().map(|(&(a, b), m)| (a, b, m))
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// Nodes with no multi-hop path to `root` (ignoring loss).
    pub fn unreachable_from(&self, root: NodeId, nodes: &[NodeId]) -> Vec<NodeId> {
        let mut seen = std::collections::BTreeSet::from([root]);
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            for (m, _) in self.neighbors(n) {
                if self.link(m, n).is_some() && seen.insert(m) {
                    stack.push(m);
                }
            }
        }
        nodes.iter().copied().filter(|n| !seen.contains(n)).collect()
    }
}
