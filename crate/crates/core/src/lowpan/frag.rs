//! RFC 4944 fragmentation and reassembly.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ip::NodeId;
use crate::kernel::SimTime;

pub const FRAG1_HEADER_LEN: usize = 4;
pub const FRAGN_HEADER_LEN: usize = 5;
pub const MAX_DATAGRAM: usize = 2047;
pub const REASSEMBLY_TIMEOUT_MS: u64 = 10_000;

const FRAG1_DISPATCH: u8 = 0b1100_0000;
const FRAGN_DISPATCH: u8 = 0b1110_0000;
const DISPATCH_MASK: u8 = 0b1111_1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FragmentHeader {
    First { size: u16, tag: u16 },
    Subsequent { size: u16, tag: u16, offset: u8 },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FragError {
    #[error("datagram of {0} bytes exceeds the 2047-byte limit")]
    Oversize(usize),
    #[error("fragment budget too small to make progress")]
    Budget,
    #[error("fragment header truncated")]
    Truncated,
}

impl FragmentHeader {
    pub fn size(&self) -> u16 {
        match *self {
            FragmentHeader::First { size, .. } | FragmentHeader::Subsequent { size, .. } => size,
        }
    }

    pub fn tag(&self) -> u16 {
        match *self {
            FragmentHeader::First { tag, .. } | FragmentHeader::Subsequent { tag, .. } => tag,
        }
    }

    /// Byte offset of the fragment's data in the datagram.
    pub fn byte_offset(&self) -> usize {
        match *self {
            FragmentHeader::First { .. } => 0,
            FragmentHeader::Subsequent { offset, .. } => usize::from(offset) * 8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            FragmentHeader::First { .. } => FRAG1_HEADER_LEN,
            FragmentHeader::Subsequent { .. } => FRAGN_HEADER_LEN,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn encode(&self, out: &mut Vec<u8>) {
        let size = self.size() & 0x07ff;
        let (dispatch, offset) = match *self {
            FragmentHeader::First { .. } => (FRAG1_DISPATCH, None),
            FragmentHeader::Subsequent { offset, .. } => (FRAGN_DISPATCH, Some(offset)),
        };
        out.push(dispatch | (size >> 8) as u8);
        out.push(size as u8);
        out.extend_from_slice(&self.tag().to_be_bytes());
        out.extend(offset);
    }

    /// Parse a fragment header; `Ok(None)` if the frame is not a fragment.
    pub fn decode(bytes: &[u8]) -> Result<Option<(FragmentHeader, &[u8])>, FragError> {
        let Some(&first) = bytes.first() else {
            return Ok(None);
        };
        let dispatch = first & DISPATCH_MASK;
        if dispatch != FRAG1_DISPATCH && dispatch != FRAGN_DISPATCH {
            return Ok(None);
        }
        let need = if dispatch == FRAG1_DISPATCH {
            FRAG1_HEADER_LEN
        } else {
            FRAGN_HEADER_LEN
        };
        if bytes.len() < need {
            return Err(FragError::Truncated);
        }
        let size = (u16::from(first & 0x07) << 8) | u16::from(bytes[1]);
        let tag = u16::from_be_bytes([bytes[2], bytes[3]]);
        let header = if dispatch == FRAG1_DISPATCH {
            FragmentHeader::First { size, tag }
        } else {
            FragmentHeader::Subsequent {
                size,
                tag,
                offset: bytes[4],
            }
        };
        Ok(Some((header, &bytes[need..])))
    }
}

/// Per-frame byte budgets for the fragmenter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FragmentBudget {
    /// Largest datagram sent without fragmentation.
    pub whole: usize,
    /// Data bytes in the first fragment (rounded down to a multiple of 8).
    pub first: usize,
    /// Data bytes in later fragments; non-final ones round down to 8.
    pub subsequent: usize,
}

impl FragmentBudget {
    /// Budgets for a frame with `payload` bytes left after the MAC header.
    pub fn for_frame_payload(payload: usize) -> Self {
        FragmentBudget {
            whole: payload,
            first: payload.saturating_sub(FRAG1_HEADER_LEN) & !7,
            subsequent: payload.saturating_sub(FRAGN_HEADER_LEN),
        }
    }
}

/// Split `datagram` into frame payloads. Fits-in-one-frame datagrams are
/// returned as-is.
pub fn fragment(datagram: &[u8], budget: FragmentBudget, tag: u16) -> Result<Vec<Vec<u8>>, FragError> {
    let len = datagram.len();
    if len > MAX_DATAGRAM {
        return Err(FragError::Oversize(len));
    }
    if len <= budget.whole {
        return Ok(vec![datagram.to_vec()]);
    }
    let first = budget.first & !7;
    if first == 0 || budget.subsequent & !7 == 0 {
        return Err(FragError::Budget);
    }
    let size = len as u16;
    let mut out = Vec::new();
    let mut frame = Vec::with_capacity(FRAG1_HEADER_LEN + first);
    FragmentHeader::First { size, tag }.encode(&mut frame);
    frame.extend_from_slice(&datagram[..first]);
    out.push(frame);

    let mut offset = first;
    while offset < len {
        let remaining = len - offset;
        let take = if remaining <= budget.subsequent {
            remaining
        } else {
            budget.subsequent & !7
        };
        let mut frame = Vec::with_capacity(FRAGN_HEADER_LEN + take);
        FragmentHeader::Subsequent {
            size,
            tag,
            offset: (offset / 8) as u8,
        }
        .encode(&mut frame);
        frame.extend_from_slice(&datagram[offset..offset + take]);
        out.push(frame);
        offset += take;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
struct Partial {
    size: usize,
    started: SimTime,
    pieces: BTreeMap<usize, Vec<u8>>,
    received: usize,
}

impl Partial {
    fn overlaps(&self, start: usize, end: usize) -> bool {
        self.pieces
            .range(..end)
            .next_back()
            .is_some_and(|(&s, d)| s + d.len() > start)
    }
}

/// A partial datagram evicted by timeout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpiredDatagram {
    pub src: NodeId,
    pub tag: u16,
    /// Data of the first fragment, if it had arrived (carries the header).
    pub head: Option<Vec<u8>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReassemblyStats {
    pub completed: u64,
    pub duplicates: u64,
    pub timed_out: u64,
    pub superseded: u64,
}

/// Reassembly buffers keyed by `(link source, tag)`.
#[derive(Debug, Clone, Default)]
pub struct Reassembler {
    partials: BTreeMap<(NodeId, u16), Partial>,
    stats: ReassemblyStats,
}

impl Reassembler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stats(&self) -> ReassemblyStats {
        self.stats
    }

    pub fn in_progress(&self) -> usize {
        self.partials.len()
    }

    /// Feed one frame payload. Returns the datagram once complete.
    pub fn accept(&mut self, src: NodeId, frame: &[u8], now: SimTime) -> Result<Option<Vec<u8>>, FragError> {
        let Some((header, data)) = FragmentHeader::decode(frame)? else {
            return Ok(Some(frame.to_vec()));
        };
        let key = (src, header.tag());
        let size = usize::from(header.size());
        let start = header.byte_offset();
        let end = start + data.len();
        if end > size || data.is_empty() {
            return Ok(None);
        }

        if self.partials.get(&key).is_some_and(|p| p.size != size) {
            self.partials.remove(&key);
            self.stats.superseded += 1;
        }
        let partial = self.partials.entry(key).or_insert_with(|| Partial {
            size,
            started: now,
            pieces: BTreeMap::new(),
            received: 0,
        });
        if partial.overlaps(start, end) {
            self.stats.duplicates += 1;
            return Ok(None);
        }
        partial.pieces.insert(start, data.to_vec());
        partial.received += data.len();
        if partial.received < partial.size {
            return Ok(None);
        }

        let partial = self.partials.remove(&key).expect("present");
        let mut datagram = Vec::with_capacity(partial.size);
        for piece in partial.pieces.into_values() {
            datagram.extend_from_slice(&piece);
        }
        self.stats.completed += 1;
        Ok(Some(datagram))
    }

    /// Earliest time a currently-buffered datagram could time out.
    pub fn next_deadline(&self) -> Option<SimTime> {
        self.partials.values().map(|p| p.started + REASSEMBLY_TIMEOUT_MS).min()
    }

    /// Drop partial datagrams older than the reassembly timeout.
    pub fn expire(&mut self, now: SimTime) -> Vec<ExpiredDatagram> {
        let stale: Vec<_> = self
            .partials
            .iter()
            .filter(|(_, p)| now.saturating_sub(p.started) >= REASSEMBLY_TIMEOUT_MS)
            .map(|(k, _)| *k)
            .collect();
        stale
            .into_iter()
            .map(|key| {
                let mut p = self.partials.remove(&key).expect("present");
                self.stats.timed_out += 1;
                ExpiredDatagram {
                    src: key.0,
                    tag: key.1,
                    head: p.pieces.remove(&0),
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const A: NodeId = NodeId(2);

    fn data(n: usize) -> Vec<u8> {
        (0..n).map(|i| (i * 7 + 3) as u8).collect()
    }

    #[test]
    fn header_bit_layout() {
        let mut b = Vec::new();
        FragmentHeader::First { size: 200, tag: 0xBEEF }.encode(&mut b);
        assert_eq!(b, vec![0xC0, 0xC8, 0xBE, 0xEF]);
        b.clear();
        FragmentHeader::Subsequent {
            size: 0x7FF,
            tag: 0x0102,
            offset: 12,
        }
        .encode(&mut b);
        assert_eq!(b, vec![0xE7, 0xFF, 0x01, 0x02, 0x0C]);
        let (h, rest) = FragmentHeader::decode(&[0xE7, 0xFF, 0x01, 0x02, 0x0C, 9])
            .unwrap()
            .unwrap();
        assert_eq!(h.byte_offset(), 96);
        assert_eq!(h.size(), 2047);
        assert_eq!(rest, &[9]);
        assert_eq!(FragmentHeader::decode(&[0xC0, 1]), Err(FragError::Truncated));
        assert_eq!(FragmentHeader::decode(&[0x7B, 1]), Ok(None));
    }

    #[test]
    fn default_budget_from_frame() {
        let b = FragmentBudget::for_frame_payload(102);
        assert_eq!(
            b,
            FragmentBudget {
                whole: 102,
                first: 96,
                subsequent: 97
            }
        );
    }

    #[test]
    fn nominal_sample_never_fragments() {
        let d = data(33);
        let frames = fragment(&d, FragmentBudget::for_frame_payload(102), 1).unwrap();
        assert_eq!(frames, vec![d]);
    }

    #[test]
    fn two_hundred_bytes_with_96_byte_first_fragment() {
        let d = data(200);
        let budget = FragmentBudget {
            whole: 96,
            first: 96,
            subsequent: 104,
        };
        let frames = fragment(&d, budget, 7).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[0].len(), FRAG1_HEADER_LEN + 96);
        assert_eq!(&frames[0][4..], &d[..96]);
        let (h, rest) = FragmentHeader::decode(&frames[1]).unwrap().unwrap();
        assert_eq!(
            h,
            FragmentHeader::Subsequent {
                size: 200,
                tag: 7,
                offset: 12
            }
        );
        assert_eq!(rest, &d[96..]);
        assert_eq!(rest.len(), 104);
    }

    #[test]
    fn two_hundred_bytes_with_frame_budget() {
        let frames = fragment(&data(200), FragmentBudget::for_frame_payload(102), 7).unwrap();
        let lens: Vec<_> = frames.iter().map(Vec::len).collect();
        assert_eq!(lens, vec![4 + 96, 5 + 96, 5 + 8]);
    }

    #[test]
    fn oversize_rejected() {
        assert_eq!(
            fragment(&data(2048), FragmentBudget::for_frame_payload(102), 0),
            Err(FragError::Oversize(2048))
        );
    }

    #[test]
    fn out_of_order_and_duplicates() {
        let d = data(300);
        let frames = fragment(&d, FragmentBudget::for_frame_payload(102), 9).unwrap();
        let mut r = Reassembler::new();
        let now = SimTime(0);
        let mut order: Vec<_> = frames.iter().rev().collect();
        order.insert(1, &frames[1]);
        let mut done = Vec::new();
        for f in order {
            if let Some(x) = r.accept(A, f, now).unwrap() {
                done.push(x);
            }
        }
        assert_eq!(done, vec![d]);
        assert_eq!(r.stats().duplicates, 1);
        assert_eq!(r.in_progress(), 0);
    }

    #[test]
    fn duplicate_after_completion_is_not_redelivered_as_complete() {
        let d = data(150);
        let frames = fragment(&d, FragmentBudget::for_frame_payload(102), 3).unwrap();
        let mut r = Reassembler::new();
        assert_eq!(r.accept(A, &frames[0], SimTime(0)).unwrap(), None);
        assert_eq!(r.accept(A, &frames[1], SimTime(1)).unwrap(), Some(d));
        // a retransmitted FRAGN starts a new partial that never completes
        assert_eq!(r.accept(A, &frames[1], SimTime(2)).unwrap(), None);
        let expired = r.expire(SimTime(2 + REASSEMBLY_TIMEOUT_MS));
        assert_eq!(expired.len(), 1);
        assert_eq!(expired[0].head, None);
        assert_eq!(r.stats().completed, 1);
    }

    #[test]
    fn missing_final_fragment_times_out() {
        let d = data(250);
        let frames = fragment(&d, FragmentBudget::for_frame_payload(102), 4).unwrap();
        let mut r = Reassembler::new();
        for f in &frames[..frames.len() - 1] {
            assert_eq!(r.accept(A, f, SimTime(100)).unwrap(), None);
        }
        assert_eq!(r.next_deadline(), Some(SimTime(10_100)));
        assert!(r.expire(SimTime(10_099)).is_empty());
        let e = r.expire(SimTime(10_100));
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].head.as_deref(), Some(&d[..96]));
        assert_eq!(r.stats().timed_out, 1);
    }

    #[test]
    fn unfragmented_frames_pass_through() {
        let mut r = Reassembler::new();
        let d = vec![0x7B, 1, 2, 3];
        assert_eq!(r.accept(A, &d, SimTime(0)).unwrap(), Some(d));
    }

    proptest! {
        #[test]
        fn roundtrip_random(len in 1usize..=2047, frame_payload in 24usize..=102, tag in any::<u16>(), seed in any::<u64>()) {
            let mut d: Vec<u8> = (0..len).map(|i| (i as u64).wrapping_mul(seed | 1).rotate_left(13) as u8).collect();
            // unfragmented frames are told apart by their dispatch byte
            d[0] = super::super::header::IPHC_DISPATCH;
            let frames = fragment(&d, FragmentBudget::for_frame_payload(frame_payload), tag).unwrap();
            for f in &frames {
                prop_assert!(f.len() <= frame_payload);
            }
            let mut r = Reassembler::new();
            let mut out = None;
            for f in frames.iter().rev() {
                if let Some(x) = r.accept(A, f, SimTime(0)).unwrap() {
                    out = Some(x);
                }
            }
            prop_assert_eq!(out, Some(d));
        }
    }
}
