//! The gateway host: SLIP endpoint, UDP sample server, durable journal,
//! bounded producer/consumer buffer and the cloud uploader.
//!
//! Records are journaled before they are buffered. The consumer peeks a
//! batch, keeps it in the buffer while the upload is outstanding and pops
//! it only on acknowledgment, so a failed upload loses nothing.

pub mod buffer;
pub mod concurrent;
pub mod journal;

use std::collections::VecDeque;

use thiserror::Error;

use crate::border_router::SerialMessage;
use crate::ip::{gateway_address, mote_id_of, IpError, Prefix, UdpDatagram, SAMPLE_PORT};
use crate::kernel::SimTime;
use crate::mote::record::{RecordError, SampleRecord, SAMPLE_WIRE_LEN};
use crate::slip::SlipDecoder;

pub use buffer::{capacity_for, BoundedBuffer, RECORDS_PER_MOTE_DAY};
pub use concurrent::SharedBuffer;
pub use journal::{FileStore, Journal, JournalEntry, JournalError, JournalStore, MemoryStore, JOURNAL_ENTRY_LEN};

pub const DEFAULT_BATCH_SIZE: usize = 100;
pub const BACKOFF_INITIAL_MS: u64 = 1000;
pub const BACKOFF_MAX_MS: u64 = 60_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GatewayRecord {
    pub journal_index: u64,
    pub mote_id: u16,
    pub receive_time_ms: u64,
    pub record: SampleRecord,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UploadBatch {
    pub id: u64,
    /// Drawn from the journal replay queue rather than the buffer.
    pub replay: bool,
    pub records: Vec<GatewayRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Malformed {
    #[error("bad IPv6/UDP packet: {0}")]
    Ip(#[from] IpError),
    #[error("not addressed to the gateway")]
    Destination,
    #[error("destination port {0} is not the sample port")]
    Port(u16),
    #[error("payload is {0} bytes, expected 20")]
    PayloadLength(usize),
    #[error("bad record: {0}")]
    Record(#[from] RecordError),
    #[error("unexpected serial control message")]
    Control,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProduceOutcome {
    Buffered {
        journal_index: u64,
    },
    /// Journaled, but the buffer was full.
    Shed {
        journal_index: u64,
    },
    Malformed(Malformed),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GatewayConfig {
    pub prefix: Prefix,
    pub capacity: usize,
    pub batch_size: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GatewayStats {
    pub received: u64,
    pub malformed: u64,
    pub shed: u64,
    pub uploads_sent: u64,
    pub uploads_acked: u64,
    pub uploads_failed: u64,
    pub replay_batches: u64,
    pub replayed_records: u64,
    pub restarts: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Consumer {
    Idle,
    InFlight { id: u64, len: usize, replay: bool },
    Backoff { until: SimTime },
}

#[derive(Debug)]
pub struct Gateway<S> {
    config: GatewayConfig,
    journal: Journal<S>,
    buffer: BoundedBuffer<GatewayRecord>,
    /// Parallel to the journal: entry currently sits in the buffer.
    resident: Vec<bool>,
    replay: VecDeque<u64>,
    consumer: Consumer,
    backoff_ms: u64,
    next_batch_id: u64,
    decoder: SlipDecoder,
    receipts: Vec<String>,
    stats: GatewayStats,
    /// Entries already in the store when the gateway was created.
    preexisting: u64,
    /// Shed since the replay queue was last rebuilt.
    shed_since_replay: u64,
}

impl<S: JournalStore> Gateway<S> {
    /// Start over `store`. Anything already journaled and unacked is queued
    /// for replay.
    pub fn new(config: GatewayConfig, store: S) -> Result<Self, JournalError> {
        let journal = Journal::open(store)?;
        let mut g = Gateway {
            config,
            resident: vec![false; journal.len()],
            journal,
            buffer: BoundedBuffer::new(config.capacity),
            replay: VecDeque::new(),
            consumer: Consumer::Idle,
            backoff_ms: BACKOFF_INITIAL_MS,
            next_batch_id: 0,
            decoder: SlipDecoder::new(),
            receipts: Vec::new(),
            stats: GatewayStats::default(),
            preexisting: 0,
            shed_since_replay: 0,
        };
        g.preexisting = g.journal.len() as u64;
        g.replay_journal();
        Ok(g)
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.config
    }

    pub fn stats(&self) -> GatewayStats {
        self.stats
    }

    pub fn journal(&self) -> &Journal<S> {
        &self.journal
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    pub fn max_depth(&self) -> usize {
        self.buffer.max_depth()
    }

    pub fn replay_len(&self) -> usize {
        self.replay.len()
    }

    pub fn receipts(&self) -> &[String] {
        &self.receipts
    }

    pub fn slip_malformed(&self) -> u64 {
        self.decoder.malformed()
    }

    pub fn in_flight(&self) -> bool {
        matches!(self.consumer, Consumer::InFlight { .. })
    }

    /// When a backing-off consumer may try again.
    pub fn wake_at(&self) -> Option<SimTime> {
        match self.consumer {
            Consumer::Backoff { until } => Some(until),
            _ => None,
        }
    }

    /// Nothing buffered, queued, outstanding or unacked.
    pub fn is_quiescent(&self) -> bool {
        self.buffer.is_empty()
            && self.replay.is_empty()
            && self.consumer == Consumer::Idle
            && self.journal.unacked_count() == 0
    }

    /// Renumber: later datagrams must be addressed under `prefix`.
    pub fn set_prefix(&mut self, prefix: Prefix) {
        self.config.prefix = prefix;
    }

    /// Prefix announcement for the border router, SLIP-framed.
    pub fn push_prefix(&self) -> Vec<u8> {
        SerialMessage::Prefix(self.config.prefix).to_slip()
    }

    /// Feed bytes from the serial line.
    pub fn on_serial_bytes(&mut self, bytes: &[u8], now: SimTime) -> Result<Vec<ProduceOutcome>, JournalError> {
        let mut out = Vec::new();
        for frame in self.decoder.push(bytes) {
            let outcome = match SerialMessage::decode(&frame) {
                Ok(SerialMessage::Datagram(d)) => self.produce(&d, now)?,
                _ => {
                    self.stats.malformed += 1;
                    ProduceOutcome::Malformed(Malformed::Control)
                }
            };
            out.push(outcome);
        }
        Ok(out)
    }

    fn parse(&self, ipv6: &[u8]) -> Result<(u16, SampleRecord), Malformed> {
        let d = UdpDatagram::from_ipv6_bytes(ipv6)?;
        if d.dst != gateway_address(self.config.prefix) {
            return Err(Malformed::Destination);
        }
        if d.dst_port != SAMPLE_PORT {
            return Err(Malformed::Port(d.dst_port));
        }
        if d.payload.len() != SAMPLE_WIRE_LEN {
            return Err(Malformed::PayloadLength(d.payload.len()));
        }
        Ok((mote_id_of(&d.src), SampleRecord::from_bytes(&d.payload)?))
    }

    /// UDP server on the sample port: parse, journal, then buffer.
    pub fn produce(&mut self, ipv6: &[u8], now: SimTime) -> Result<ProduceOutcome, JournalError> {
        let (mote_id, record) = match self.parse(ipv6) {
            Ok(v) => v,
            Err(m) => {
                self.stats.malformed += 1;
                return Ok(ProduceOutcome::Malformed(m));
            }
        };
        let entry = JournalEntry {
            mote_id,
            receive_time_ms: now.as_millis(),
            record,
        };
        let journal_index = self.journal.append(entry)?;
        self.stats.received += 1;
        let [a, b, c, d] = record.channels();
        self.receipts.push(format!(
            "{} mote={} counter={} no2_we={} no2_ae={} o3_we={} o3_ae={}",
            now.as_millis(),
            mote_id,
            record.counter,
            a,
            b,
            c,
            d
        ));
        let item = GatewayRecord {
            journal_index,
            mote_id,
            receive_time_ms: now.as_millis(),
            record,
        };
        if self.buffer.push(item).is_ok() {
            self.resident.push(true);
            Ok(ProduceOutcome::Buffered { journal_index })
        } else {
            self.resident.push(false);
            self.stats.shed += 1;
            self.shed_since_replay += 1;
            Ok(ProduceOutcome::Shed { journal_index })
        }
    }

    /// Queue every unacked entry that is not in the buffer, in journal
    /// order. Returns the queue length.
    pub fn replay_journal(&mut self) -> usize {
        self.shed_since_replay = 0;
        self.replay = self.journal.unacked().filter(|&i| !self.resident[i as usize]).collect();
        self.replay.len()
    }

    /// The cloud became reachable again.
    pub fn on_link_up(&mut self) {
        self.backoff_ms = BACKOFF_INITIAL_MS;
        self.replay_journal();
        if matches!(self.consumer, Consumer::Backoff { .. }) {
            self.consumer = Consumer::Idle;
        }
    }

    /// Process restart: memory is lost, the journal is re-read and every
    /// unacked entry is replayed before new traffic.
    pub fn restart(&mut self) -> Result<usize, JournalError> {
        self.journal.reload()?;
        self.buffer.clear();
        self.resident = vec![false; self.journal.len()];
        self.consumer = Consumer::Idle;
        self.backoff_ms = BACKOFF_INITIAL_MS;
        self.decoder = SlipDecoder::new();
        self.stats.restarts += 1;
        Ok(self.replay_journal())
    }

    /// Build the next upload if the consumer is free. Replay comes first;
    /// records shed after the last rebuild join it once it runs dry.
    pub fn next_batch(&mut self, now: SimTime) -> Option<UploadBatch> {
        match self.consumer {
            Consumer::InFlight { .. } => return None,
            Consumer::Backoff { until } if now < until => return None,
            _ => {}
        }
        while self.replay.front().is_some_and(|&i| self.journal.is_acked(i)) {
            self.replay.pop_front();
        }
        if self.replay.is_empty() && self.shed_since_replay > 0 {
            self.replay_journal();
        }
        let n = self.config.batch_size.max(1);
        let (records, replay): (Vec<GatewayRecord>, bool) = if !self.replay.is_empty() {
            let recs = self
                .replay
                .iter()
                .take(n)
                .map(|&i| {
                    let e = self.journal.get(i).expect("replay index in journal");
                    GatewayRecord {
                        journal_index: i,
                        mote_id: e.mote_id,
                        receive_time_ms: e.receive_time_ms,
                        record: e.record,
                    }
                })
                .collect();
            (recs, true)
        } else if !self.buffer.is_empty() {
            (self.buffer.peek(n).copied().collect(), false)
        } else {
            self.consumer = Consumer::Idle;
            return None;
        };
        let id = self.next_batch_id;
        self.next_batch_id += 1;
        self.consumer = Consumer::InFlight {
            id,
            len: records.len(),
            replay,
        };
        self.stats.uploads_sent += 1;
        if replay {
            self.stats.replay_batches += 1;
            self.stats.replayed_records += records.len() as u64;
        }
        Some(UploadBatch { id, replay, records })
    }

    /// Outcome of upload `batch`. On success the records are acked in the
    /// journal and released; on failure they stay put and the consumer
    /// backs off. Returns the retry time after a failure.
    pub fn on_upload_result(
        &mut self,
        batch: &UploadBatch,
        acked: bool,
        now: SimTime,
    ) -> Result<Option<SimTime>, JournalError> {
        let Consumer::InFlight { id, len, replay } = self.consumer else {
            return Ok(None);
        };
        if id != batch.id {
            return Ok(None);
        }
        if !acked {
            self.stats.uploads_failed += 1;
            let until = now + self.backoff_ms;
            self.backoff_ms = (self.backoff_ms * 2).min(BACKOFF_MAX_MS);
            self.consumer = Consumer::Backoff { until };
            return Ok(Some(until));
        }
        self.stats.uploads_acked += 1;
        self.backoff_ms = BACKOFF_INITIAL_MS;
        for r in &batch.records {
            self.journal.ack(r.journal_index)?;
        }
        if replay {
            while self.replay.front().is_some_and(|&i| self.journal.is_acked(i)) {
                self.replay.pop_front();
            }
        } else {
            for r in self.buffer.pop(len) {
                self.resident[r.journal_index as usize] = false;
            }
        }
        self.consumer = Consumer::Idle;
        Ok(None)
    }

    /// Every valid record received is either acked or unacked in the
    /// journal; malformed ones never reach it.
    pub fn conserved(&self) -> bool {
        self.preexisting + self.stats.received == (self.journal.acked_count() + self.journal.unacked_count()) as u64
    }
}
