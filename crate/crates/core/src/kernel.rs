//! Deterministic discrete-event engine.
//!
//! Virtual time is counted in milliseconds. Events are ordered by
//! `(fire_at, seq)` where `seq` is assigned at scheduling time from a single
//! monotone counter, so two events for the same instant always dispatch in
//! the order they were scheduled.
//!
//! Randomness is handed out as independent ChaCha streams keyed by an entity
//! tag, so adding an entity to a scenario never perturbs the draws made by
//! the others.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, Sub};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Virtual time in milliseconds since the start of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1000)
    }

    pub const fn from_hours(h: u64) -> Self {
        SimTime(h * 3_600_000)
    }

    pub const fn as_millis(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, other: SimTime) -> u64 {
        self.0.saturating_sub(other.0)
    }
}

impl Add<u64> for SimTime {
    type Output = SimTime;

    fn add(self, ms: u64) -> SimTime {
        SimTime(self.0 + ms)
    }
}

impl Sub for SimTime {
    type Output = u64;

    fn sub(self, other: SimTime) -> u64 {
        self.0 - other.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

/// Identifies the simulated entity an event is addressed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub u32);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Returned by [`Kernel::schedule`]; lets the caller cancel the event later.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn seq(self) -> u64 {
        self.0
    }
}

/// A dispatched event.
#[derive(Debug, Clone)]
pub struct SimEvent<P> {
    pub fire_at: SimTime,
    pub target: EntityId,
    pub payload: P,
    pub seq: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("cannot schedule at {requested} (clock is {now})")]
    InThePast { requested: SimTime, now: SimTime },
}

struct Queued<P> {
    fire_at: SimTime,
    seq: u64,
    target: EntityId,
    payload: P,
}

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seq == other.seq
    }
}

impl<P> Eq for Queued<P> {}

impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.fire_at, self.seq).cmp(&(other.fire_at, other.seq))
    }
}

/// FNV-1a over the dispatch trace. Cheap enough to keep on for every run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceDigest(u64);

impl TraceDigest {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;

    fn new() -> Self {
        TraceDigest(Self::OFFSET)
    }

    fn absorb(&mut self, fire_at: SimTime, seq: u64, target: EntityId) {
        let words = [fire_at.0, seq, u64::from(target.0)];
        for w in words {
            for b in w.to_be_bytes() {
                self.0 ^= u64::from(b);
                self.0 = self.0.wrapping_mul(Self::PRIME);
            }
        }
    }

    pub fn value(self) -> u64 {
        self.0
    }
}

/// Single global event queue with a virtual clock.
pub struct Kernel<P> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Queued<P>>>,
    live: HashSet<u64>,
    cancelled: HashSet<u64>,
    dispatched: u64,
    digest: TraceDigest,
    trace: Option<Vec<(SimTime, u64, EntityId)>>,
}

impl<P> Default for Kernel<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Kernel<P> {
    pub fn new() -> Self {
        Kernel {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            live: HashSet::new(),
            cancelled: HashSet::new(),
            dispatched: 0,
            digest: TraceDigest::new(),
            trace: None,
        }
    }

    /// Keep the full `(fire_at, seq, target)` list of dispatched events.
    pub fn record_trace(&mut self) {
        self.trace.get_or_insert_with(Vec::new);
    }

    pub fn trace(&self) -> Option<&[(SimTime, u64, EntityId)]> {
        self.trace.as_deref()
    }

    pub fn digest(&self) -> TraceDigest {
        self.digest
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    /// Number of live (not cancelled) events still queued.
    pub fn pending(&self) -> usize {
        self.live.len()
    }

    pub fn schedule(&mut self, fire_at: SimTime, target: EntityId, payload: P) -> Result<EventHandle, KernelError> {
        if fire_at < self.now {
            return Err(KernelError::InThePast {
                requested: fire_at,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.live.insert(seq);
        self.queue.push(Reverse(Queued {
            fire_at,
            seq,
            target,
            payload,
        }));
        Ok(EventHandle(seq))
    }

    /// Schedule `delay_ms` after the current clock. Never fails.
    pub fn schedule_in(&mut self, delay_ms: u64, target: EntityId, payload: P) -> EventHandle {
        let at = self.now + delay_ms;
        self.schedule(at, target, payload)
            .expect("relative schedule is never in the past")
    }

    /// Returns `true` if the event was still pending.
    pub fn cancel(&mut self, handle: EventHandle) -> bool {
        if self.live.remove(&handle.0) {
            self.cancelled.insert(handle.0);
            true
        } else {
            false
        }
    }

    /// Pop the next live event with `fire_at <= end`, advancing the clock to
    /// its fire time.
    pub fn pop_until(&mut self, end: SimTime) -> Option<SimEvent<P>> {
        loop {
            let head = self.queue.peek()?;
            if head.0.fire_at > end {
                return None;
            }
            let Reverse(q) = self.queue.pop().expect("peeked");
            if self.cancelled.remove(&q.seq) {
                continue;
            }
            self.live.remove(&q.seq);
            self.now = q.fire_at;
            self.dispatched += 1;
            self.digest.absorb(q.fire_at, q.seq, q.target);
            if let Some(trace) = self.trace.as_mut() {
                trace.push((q.fire_at, q.seq, q.target));
            }
            return Some(SimEvent {
                fire_at: q.fire_at,
                target: q.target,
                payload: q.payload,
                seq: q.seq,
            });
        }
    }

    /// Dispatch every event with `fire_at <= end` in `(fire_at, seq)` order,
    /// then set the clock to `end`. Returns the number of dispatches.
    pub fn run_until<F>(&mut self, end: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Kernel<P>, SimEvent<P>),
    {
        let mut count = 0;
        while let Some(ev) = self.pop_until(end) {
            handler(self, ev);
            count += 1;
        }
        self.advance_to(end);
        count
    }

    /// Move the clock forward without dispatching. Moving backwards is a no-op.
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.now {
            self.now = t;
        }
    }
}

/// Source of per-entity RNG streams derived from one master seed.
#[derive(Debug, Clone)]
pub struct RngStreams {
    seed: u64,
    streams: BTreeMap<(u64, u64, u64), ChaCha8Rng>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        RngStreams {
            seed,
            streams: BTreeMap::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Seed for the stream `(tag, a, b)`, independent of which other streams
    /// exist.
    pub fn derive_seed(&self, tag: u64, a: u64, b: u64) -> u64 {
        let mut h = splitmix64(self.seed ^ 0x5851_f42d_4c95_7f2d);
        for part in [tag, a, b] {
            h = splitmix64(h ^ part);
        }
        h
    }

    /// Stateful stream for `(tag, a, b)`; created on first use.
    pub fn stream(&mut self, tag: u64, a: u64, b: u64) -> &mut ChaCha8Rng {
        let seed = self.derive_seed(tag, a, b);
        self.streams
            .entry((tag, a, b))
            .or_insert_with(|| ChaCha8Rng::seed_from_u64(seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    const E: EntityId = EntityId(1);

    #[test]
    fn zero_time_event_fires_before_later_ones() {
        let mut k = Kernel::new();
        k.schedule(SimTime(5), E, "later").unwrap();
        k.schedule(SimTime(0), E, "now").unwrap();
        let mut seen = Vec::new();
        k.run_until(SimTime(10), |_, ev| seen.push(ev.payload));
        assert_eq!(seen, vec!["now", "later"]);
    }

    #[test]
    fn equal_times_dispatch_in_seq_order() {
        let mut k = Kernel::new();
        let a = k.schedule(SimTime(4000), E, 1).unwrap();
        let b = k.schedule(SimTime(4000), E, 2).unwrap();
        assert!(a.seq() < b.seq());
        let mut seen = Vec::new();
        k.run_until(SimTime(4000), |_, ev| seen.push((ev.seq, ev.payload)));
        assert_eq!(seen, vec![(a.seq(), 1), (b.seq(), 2)]);
    }

    #[test]
    fn rejects_past_schedule() {
        let mut k: Kernel<()> = Kernel::new();
        k.advance_to(SimTime(4000));
        assert_eq!(
            k.schedule(SimTime(3999), E, ()),
            Err(KernelError::InThePast {
                requested: SimTime(3999),
                now: SimTime(4000)
            })
        );
        assert!(k.schedule(SimTime(4000), E, ()).is_ok());
    }

    #[test]
    fn empty_queue_advances_clock() {
        let mut k: Kernel<()> = Kernel::new();
        assert_eq!(k.now(), SimTime::ZERO);
        assert_eq!(k.run_until(SimTime(10_000), |_, _| {}), 0);
        assert_eq!(k.now(), SimTime(10_000));
    }

    #[test]
    fn periodic_sampler_fires_fifteen_times_in_a_minute() {
        let mut k = Kernel::new();
        k.schedule(SimTime(4000), E, ()).unwrap();
        let n = k.run_until(SimTime(60_000), |k, _| {
            k.schedule_in(4000, E, ());
        });
        assert_eq!(n, 15);
    }

    #[test]
    fn cancelled_events_never_dispatch() {
        let mut k = Kernel::new();
        let h = k.schedule(SimTime(10), E, "x").unwrap();
        k.schedule(SimTime(20), E, "y").unwrap();
        assert!(k.cancel(h));
        assert!(!k.cancel(h));
        assert_eq!(k.pending(), 1);
        let mut seen = Vec::new();
        k.run_until(SimTime(100), |_, ev| seen.push(ev.payload));
        assert_eq!(seen, vec!["y"]);
    }

    #[test]
    fn handlers_can_schedule_at_current_time() {
        let mut k = Kernel::new();
        k.schedule(SimTime(7), E, 0u32).unwrap();
        let mut seen = Vec::new();
        k.run_until(SimTime(7), |k, ev| {
            seen.push((k.now(), ev.payload));
            if ev.payload < 3 {
                k.schedule(k.now(), E, ev.payload + 1).unwrap();
            }
        });
        assert_eq!(seen, (0..4).map(|i| (SimTime(7), i)).collect::<Vec<_>>());
    }

    fn random_run(seed: u64) -> Vec<(SimTime, u64, EntityId)> {
        let mut k = Kernel::new();
        k.record_trace();
        let mut rngs = RngStreams::new(seed);
        for id in 0..4 {
            k.schedule(SimTime(0), EntityId(id), ()).unwrap();
        }
        k.run_until(SimTime(50_000), |k, ev| {
            let d = rngs.stream(1, u64::from(ev.target.0), 0).random_range(0..5000);
            k.schedule_in(d, ev.target, ());
        });
        k.trace().unwrap().to_vec()
    }

    #[test]
    fn identical_seed_identical_trace() {
        assert_eq!(random_run(42), random_run(42));
        assert_ne!(random_run(42), random_run(43));
    }

    #[test]
    fn streams_are_independent_of_creation_order() {
        let mut a = RngStreams::new(9);
        let mut b = RngStreams::new(9);
        let _ = b.stream(1, 7, 0).random::<u64>();
        let x: u64 = a.stream(1, 3, 0).random();
        let y: u64 = b.stream(1, 3, 0).random();
        assert_eq!(x, y);
    }
}
