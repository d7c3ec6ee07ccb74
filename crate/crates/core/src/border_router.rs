//! The 6LBR: DODAG root on the radio side, SLIP endpoint on the serial side.

use std::collections::VecDeque;

use rand::Rng;
use thiserror::Error;

use crate::ip::{gateway_address, NodeId, Prefix, SAMPLE_PORT};
use crate::kernel::SimTime;
use crate::lowpan::header::decompress;
use crate::rpl::{RootInit, RplError, RplNode};
use crate::slip::{slip_encode, SlipDecoder};

pub const SERIAL_QUEUE_CAPACITY: usize = 64;
/// 115200 baud folded into a fixed per-datagram service time.
pub const SERIAL_DATAGRAM_MS: u64 = 1;

pub const SERIAL_TYPE_DATAGRAM: u8 = 0x00;
pub const SERIAL_TYPE_PREFIX: u8 = 0x01;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SerialError {
    #[error("empty serial frame")]
    Empty,
    #[error("unknown serial message type {0:#04x}")]
    UnknownType(u8),
    #[error("prefix announcement has {0} body bytes, expected 8")]
    PrefixLength(usize),
}

/// One control-framed message on the serial line: `[type][body]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SerialMessage {
    Datagram(Vec<u8>),
    Prefix(Prefix),
}

impl SerialMessage {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            SerialMessage::Datagram(d) => {
                let mut out = Vec::with_capacity(d.len() + 1);
                out.push(SERIAL_TYPE_DATAGRAM);
                out.extend_from_slice(d);
                out
            }
            SerialMessage::Prefix(p) => {
                let mut out = vec![SERIAL_TYPE_PREFIX];
                out.extend_from_slice(&p.to_be_bytes());
                out
            }
        }
    }

    pub fn decode(frame: &[u8]) -> Result<Self, SerialError> {
        let (&kind, body) = frame.split_first().ok_or(SerialError::Empty)?;
        match kind {
            SERIAL_TYPE_DATAGRAM => Ok(SerialMessage::Datagram(body.to_vec())),
            SERIAL_TYPE_PREFIX => {
                let b: [u8; 8] = body.try_into().map_err(|_| SerialError::PrefixLength(body.len()))?;
                Ok(SerialMessage::Prefix(Prefix::from_be_bytes(b)))
            }
            other => Err(SerialError::UnknownType(other)),
        }
    }

    /// SLIP-framed bytes ready for the wire.
    pub fn to_slip(&self) -> Vec<u8> {
        slip_encode(&self.encode())
    }
}

/// Serial cable between border router and gateway.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SerialLine {
    pub datagram_ms: u64,
    /// Independent per-byte corruption probability.
    pub byte_error: f64,
}

impl Default for SerialLine {
    fn default() -> Self {
        SerialLine {
            datagram_ms: SERIAL_DATAGRAM_MS,
            byte_error: 0.0,
        }
    }
}

impl SerialLine {
    /// Corrupt bytes in place, each replaced by a different random value
    /// with probability `byte_error`. Returns how many were hit.
    pub fn corrupt<R: Rng + ?Sized>(&self, bytes: &mut [u8], rng: &mut R) -> usize {
        if self.byte_error <= 0.0 {
            return 0;
        }
        let mut hit = 0;
        for b in bytes.iter_mut() {
            if rng.random_bool(self.byte_error.min(1.0)) {
                *b ^= rng.random_range(1..=255u8);
                hit += 1;
            }
        }
        hit
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BorderRouterStats {
    /// Datagrams that reached the root from the mesh.
    pub received: u64,
    /// Queued for the serial line.
    pub forwarded: u64,
    pub dropped_overflow: u64,
    /// Not addressed to the gateway's sample port, or undecodable.
    pub dropped_misroute: u64,
    pub serial_frames_in: u64,
    pub serial_rejected: u64,
    pub max_queue: usize,
}

impl BorderRouterStats {
    pub fn conserved(&self) -> bool {
        self.received == self.forwarded + self.dropped_overflow + self.dropped_misroute
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardOutcome {
    /// Queued; `start_line` is set when the line was idle.
    Queued {
        start_line: bool,
    },
    Overflow,
    Misroute,
}

#[derive(Debug, Clone)]
pub struct BorderRouter {
    node: NodeId,
    prefix: Option<Prefix>,
    queue: VecDeque<Vec<u8>>,
    transmitting: bool,
    decoder: SlipDecoder,
    stats: BorderRouterStats,
}

impl BorderRouter {
    pub fn new(node: NodeId) -> Self {
        BorderRouter {
            node,
            prefix: None,
            queue: VecDeque::new(),
            transmitting: false,
            decoder: SlipDecoder::new(),
            stats: BorderRouterStats::default(),
        }
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn prefix(&self) -> Option<Prefix> {
        self.prefix
    }

    pub fn stats(&self) -> BorderRouterStats {
        self.stats
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_transmitting(&self) -> bool {
        self.transmitting
    }

    /// Take a compressed datagram that reached the root and queue it for the
    /// gateway as a full IPv6 packet.
    pub fn forward_up(&mut self, compressed: &[u8]) -> ForwardOutcome {
        self.stats.received += 1;
        let Some(prefix) = self.prefix else {
            self.stats.dropped_misroute += 1;
            return ForwardOutcome::Misroute;
        };
        let datagram = match decompress(compressed, prefix) {
            Ok(d) if d.dst == gateway_address(prefix) && d.dst_port == SAMPLE_PORT => d,
            _ => {
                self.stats.dropped_misroute += 1;
                return ForwardOutcome::Misroute;
            }
        };
        if self.queue.len() >= SERIAL_QUEUE_CAPACITY {
            self.stats.dropped_overflow += 1;
            return ForwardOutcome::Overflow;
        }
        self.queue
            .push_back(SerialMessage::Datagram(datagram.to_ipv6_bytes()).to_slip());
        self.stats.forwarded += 1;
        self.stats.max_queue = self.stats.max_queue.max(self.queue.len());
        ForwardOutcome::Queued {
            start_line: !self.transmitting,
        }
    }

    /// Begin sending the head of the queue. `None` if busy or empty.
    pub fn start_transmission(&mut self) -> Option<Vec<u8>> {
        if self.transmitting {
            return None;
        }
        let frame = self.queue.pop_front()?;
        self.transmitting = true;
        Some(frame)
    }

    pub fn transmission_done(&mut self) {
        self.transmitting = false;
    }

    /// Bytes arriving from the gateway. Returns decoded control messages.
    pub fn on_serial_bytes(&mut self, bytes: &[u8]) -> Vec<SerialMessage> {
        let mut out = Vec::new();
        for frame in self.decoder.push(bytes) {
            self.stats.serial_frames_in += 1;
            match SerialMessage::decode(&frame) {
                Ok(m) => out.push(m),
                Err(_) => self.stats.serial_rejected += 1,
            }
        }
        out
    }

    pub fn slip_malformed(&self) -> u64 {
        self.decoder.malformed()
    }

    /// Hand the gateway's prefix to the DODAG root.
    pub fn accept_prefix<R: Rng + ?Sized>(
        &mut self,
        prefix: Prefix,
        root: &mut RplNode,
        now: SimTime,
        rng: &mut R,
    ) -> Result<RootInit, RplError> {
        let r = root.root_initialize(prefix, now, rng)?;
        self.prefix = Some(prefix);
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ip::{mote_address, UdpDatagram, DEFAULT_HOP_LIMIT, MOTE_PORT};
    use crate::lowpan::compress;
    use crate::slip::slip_decode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const P: Prefix = Prefix(0xfd00_0000_0000_0000);

    fn sample(from: u16, dst: std::net::Ipv6Addr) -> UdpDatagram {
        UdpDatagram {
            src: mote_address(P, NodeId(from)),
            dst,
            src_port: MOTE_PORT,
            dst_port: SAMPLE_PORT,
            hop_limit: DEFAULT_HOP_LIMIT,
            payload: (0..20).collect(),
        }
    }

    fn router() -> (BorderRouter, RplNode) {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut br = BorderRouter::new(NodeId(1));
        let mut root = RplNode::new(NodeId(1), true);
        assert_eq!(
            br.accept_prefix(P, &mut root, SimTime(0), &mut rng),
            Ok(RootInit::Initialized)
        );
        (br, root)
    }

    #[test]
    fn serial_message_framing() {
        let m = SerialMessage::Prefix(P);
        assert_eq!(m.encode(), vec![0x01, 0xfd, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(SerialMessage::decode(&m.encode()), Ok(m));
        assert_eq!(SerialMessage::decode(&[]), Err(SerialError::Empty));
        assert_eq!(SerialMessage::decode(&[0x07]), Err(SerialError::UnknownType(7)));
        assert_eq!(SerialMessage::decode(&[0x01, 1, 2]), Err(SerialError::PrefixLength(2)));
        let d = SerialMessage::Datagram(vec![0xC0, 0xDB]);
        assert_eq!(d.to_slip(), vec![0xC0, 0x00, 0xDB, 0xDC, 0xDB, 0xDD, 0xC0]);
    }

    #[test]
    fn datagram_crosses_serial_byte_identical() {
        let (mut br, _) = router();
        let d = sample(7, gateway_address(P));
        let c = compress(&d, P).unwrap();
        assert_eq!(br.forward_up(&c), ForwardOutcome::Queued { start_line: true });
        let wire = br.start_transmission().unwrap();
        assert!(br.start_transmission().is_none());
        let frames = slip_decode(&wire);
        assert_eq!(frames.len(), 1);
        match SerialMessage::decode(&frames[0]).unwrap() {
            SerialMessage::Datagram(bytes) => {
                assert_eq!(UdpDatagram::from_ipv6_bytes(&bytes).unwrap(), d);
                assert_eq!(bytes, d.to_ipv6_bytes());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn misroute_and_overflow_are_counted() {
        let (mut br, _) = router();
        let stray = compress(&sample(7, mote_address(P, NodeId(9))), P).unwrap();
        assert_eq!(br.forward_up(&stray), ForwardOutcome::Misroute);
        assert_eq!(br.forward_up(&[1, 2, 3]), ForwardOutcome::Misroute);
        let good = compress(&sample(7, gateway_address(P)), P).unwrap();
        for _ in 0..SERIAL_QUEUE_CAPACITY {
            assert!(matches!(br.forward_up(&good), ForwardOutcome::Queued { .. }));
        }
        assert_eq!(br.forward_up(&good), ForwardOutcome::Overflow);
        let s = br.stats();
        assert_eq!(
            (s.received, s.forwarded, s.dropped_overflow, s.dropped_misroute),
            (67, 64, 1, 2)
        );
        assert!(s.conserved());
    }

    #[test]
    fn prefix_idempotent_then_renumber() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (mut br, mut root) = router();
        assert_eq!(
            br.accept_prefix(P, &mut root, SimTime(10), &mut rng),
            Ok(RootInit::Unchanged)
        );
        let p2 = Prefix(0xfd01_0000_0000_0000);
        assert_eq!(
            br.accept_prefix(p2, &mut root, SimTime(20), &mut rng),
            Ok(RootInit::Renumbered { version: 2 })
        );
        assert_eq!(br.prefix(), Some(p2));
    }

    #[test]
    fn prefix_arrives_over_serial() {
        let mut br = BorderRouter::new(NodeId(1));
        let mut wire = SerialMessage::Prefix(P).to_slip();
        wire.extend_from_slice(&[0xDB, 0x01, 0xC0]);
        let (a, b) = wire.split_at(4);
        assert!(br.on_serial_bytes(a).is_empty());
        assert_eq!(br.on_serial_bytes(b), vec![SerialMessage::Prefix(P)]);
        assert_eq!(br.slip_malformed(), 1);
    }

    #[test]
    fn corruption_changes_bytes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let line = SerialLine {
            byte_error: 1.0,
            ..Default::default()
        };
        let orig = vec![0u8; 32];
        let mut b = orig.clone();
        assert_eq!(line.corrupt(&mut b, &mut rng), 32);
        assert!(b.iter().all(|&x| x != 0));
        let mut c = orig.clone();
        assert_eq!(SerialLine::default().corrupt(&mut c, &mut rng), 0);
        assert_eq!(c, orig);
    }
}
