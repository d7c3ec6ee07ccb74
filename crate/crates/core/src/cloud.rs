//! Mock ingest service: dedup on `(mote_id, counter)`, ADC conversion,
//! time-series store and verification queries.

use std::collections::BTreeMap;
use std::io;

use thiserror::Error;

use crate::gateway::UploadBatch;
use crate::kernel::SimTime;
use crate::mote::adc::adc_convert;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OutageError {
    #[error("outage window [{0}, {1}) is empty or reversed")]
    Empty(u64, u64),
    #[error("outage windows overlap or are unsorted at [{0}, {1})")]
    Overlap(u64, u64),
}

/// Sorted, disjoint `[start, end)` windows during which ingest refuses.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OutageSchedule {
    windows: Vec<(SimTime, SimTime)>,
}

impl OutageSchedule {
    pub fn new(windows: Vec<(SimTime, SimTime)>) -> Result<Self, OutageError> {
        let mut prev_end = None;
        for &(s, e) in &windows {
            if s >= e {
                return Err(OutageError::Empty(s.as_millis(), e.as_millis()));
            }
            if prev_end.is_some_and(|p| s < p) {
                return Err(OutageError::Overlap(s.as_millis(), e.as_millis()));
            }
            prev_end = Some(e);
        }
        Ok(OutageSchedule { windows })
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn windows(&self) -> &[(SimTime, SimTime)] {
        &self.windows
    }

    pub fn is_down(&self, t: SimTime) -> bool {
        self.windows.iter().any(|&(s, e)| s <= t && t < e)
    }

    /// End of the last window, if any.
    pub fn last_end(&self) -> Option<SimTime> {
        self.windows.last().map(|w| w.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestRecord {
    pub mote_id: u16,
    pub counter: u32,
    pub receive_time_ms: u64,
    pub raw: [u32; 4],
    pub mv: [f64; 4],
    pub ingest_time_ms: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IngestError {
    #[error("connection refused (outage)")]
    Refused,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestAck {
    pub batch_id: u64,
    pub stored: usize,
    pub duplicates: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Completeness {
    pub expected: u32,
    pub received: u32,
    pub missing: Vec<u32>,
    /// Stored counters outside `0..expected`.
    pub unexpected: u32,
    pub duplicates_suppressed: u64,
}

impl Completeness {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty()
    }

    pub fn ratio(&self) -> f64 {
        if self.expected == 0 {
            1.0
        } else {
            f64::from(self.expected - self.missing.len() as u32) / f64::from(self.expected)
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CloudStats {
    pub batches_accepted: u64,
    pub batches_refused: u64,
    pub stored: u64,
    pub duplicates_suppressed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct CloudStore {
    outages: OutageSchedule,
    records: BTreeMap<(u16, u32), IngestRecord>,
    duplicates: BTreeMap<u16, u64>,
    stats: CloudStats,
}

pub const CSV_HEADER: [&str; 11] = [
    "mote_id",
    "counter",
    "receive_time_ms",
    "no2_we_raw",
    "no2_we_mv",
    "no2_ae_raw",
    "no2_ae_mv",
    "o3_we_raw",
    "o3_we_mv",
    "o3_ae_raw",
    "o3_ae_mv",
];

impl CloudStore {
    pub fn new(outages: OutageSchedule) -> Self {
        CloudStore {
            outages,
            ..Default::default()
        }
    }

    pub fn outages(&self) -> &OutageSchedule {
        &self.outages
    }

    pub fn stats(&self) -> CloudStats {
        self.stats
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn is_down(&self, now: SimTime) -> bool {
        self.outages.is_down(now)
    }

    pub fn ingest_batch(&mut self, batch: &UploadBatch, now: SimTime) -> Result<IngestAck, IngestError> {
        if self.outages.is_down(now) {
            self.stats.batches_refused += 1;
            return Err(IngestError::Refused);
        }
        let mut ack = IngestAck {
            batch_id: batch.id,
            stored: 0,
            duplicates: 0,
        };
        for r in &batch.records {
            let key = (r.mote_id, r.record.counter);
            if self.records.contains_key(&key) {
                ack.duplicates += 1;
                *self.duplicates.entry(r.mote_id).or_default() += 1;
                continue;
            }
            let raw = r.record.channels();
            let mv = raw.map(|d| adc_convert(d).expect("record channels are 12-bit"));
            self.records.insert(
                key,
                IngestRecord {
                    mote_id: r.mote_id,
                    counter: r.record.counter,
                    receive_time_ms: r.receive_time_ms,
                    raw,
                    mv,
                    ingest_time_ms: now.as_millis(),
                },
            );
            ack.stored += 1;
        }
        self.stats.batches_accepted += 1;
        self.stats.stored += ack.stored as u64;
        self.stats.duplicates_suppressed += ack.duplicates as u64;
        Ok(ack)
    }

    pub fn get(&self, mote_id: u16, counter: u32) -> Option<&IngestRecord> {
        self.records.get(&(mote_id, counter))
    }

    /// All records of every mote, ordered by `(mote_id, counter)`.
    pub fn iter(&self) -> impl Iterator<Item = &IngestRecord> {
        self.records.values()
    }

    /// Records of `mote_id` received in `[t0, t1)`, ordered by counter.
    pub fn query_series(&self, mote_id: u16, t0: SimTime, t1: SimTime) -> Vec<&IngestRecord> {
        self.records
            .range((mote_id, 0)..=(mote_id, u32::MAX))
            .map(|(_, r)| r)
            .filter(|r| t0.as_millis() <= r.receive_time_ms && r.receive_time_ms < t1.as_millis())
            .collect()
    }

    /// Sample time is not carried on the wire. Estimate it as
    /// `counter * period + phase`, where the phase is the smallest observed
    /// `receive_time - counter * period` for the mote.
    pub fn estimated_sample_time(&self, mote_id: u16, counter: u32, period_ms: u64) -> Option<u64> {
        let phase = self
            .records
            .range((mote_id, 0)..=(mote_id, u32::MAX))
            .map(|(_, r)| r.receive_time_ms as i128 - i128::from(r.counter) * i128::from(period_ms))
            .min()?;
        u64::try_from(i128::from(counter) * i128::from(period_ms) + phase).ok()
    }

    pub fn completeness_report(&self, expected: &BTreeMap<u16, u32>) -> BTreeMap<u16, Completeness> {
        expected
            .iter()
            .map(|(&mote, &n)| {
                let stored: Vec<u32> = self
                    .records
                    .range((mote, 0)..=(mote, u32::MAX))
                    .map(|(&(_, c), _)| c)
                    .collect();
                let in_range = stored.iter().filter(|&&c| c < n).count() as u32;
                let mut missing = Vec::new();
                let mut it = stored.iter().copied().peekable();
                for c in 0..n {
                    while it.peek().is_some_and(|&s| s < c) {
                        it.next();
                    }
                    if it.peek() != Some(&c) {
                        missing.push(c);
                    }
                }
                (
                    mote,
                    Completeness {
                        expected: n,
                        received: in_range,
                        missing,
                        unexpected: stored.len() as u32 - in_range,
                        duplicates_suppressed: self.duplicates.get(&mote).copied().unwrap_or(0),
                    },
                )
            })
            .collect()
    }

    pub fn write_csv<'a, W: io::Write>(
        records: impl IntoIterator<Item = &'a IngestRecord>,
        out: W,
    ) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in records {
            let mut row = vec![
                r.mote_id.to_string(),
                r.counter.to_string(),
                r.receive_time_ms.to_string(),
            ];
            for ch in 0..4 {
                row.push(r.raw[ch].to_string());
                row.push(format!("{:.6}", r.mv[ch]));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}
