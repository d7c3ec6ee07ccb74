use rand::Rng;

use crate::kernel::SimTime;

pub const DIO_MIN_INTERVAL_MS: u64 = 1000;
pub const DIO_MAX_INTERVAL_MS: u64 = 60_000;

/// Trickle without redundancy suppression: the interval starts at 1 s,
/// doubles after every interval up to 60 s, and snaps back to 1 s on reset.
/// The transmission falls at a random point in the second half of each
/// interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrickleLite {
    interval_ms: u64,
    interval_start: SimTime,
    fire_at: Option<SimTime>,
}

impl Default for TrickleLite {
    fn default() -> Self {
        TrickleLite {
            interval_ms: DIO_MIN_INTERVAL_MS,
            interval_start: SimTime::ZERO,
            fire_at: None,
        }
    }
}

impl TrickleLite {
    pub fn interval_ms(&self) -> u64 {
        self.interval_ms
    }

    pub fn fire_at(&self) -> Option<SimTime> {
        self.fire_at
    }

    fn pick<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let half = self.interval_ms / 2;
        let t = self.interval_start + half + rng.random_range(0..self.interval_ms - half);
        self.fire_at = Some(t);
    }

    pub fn reset<R: Rng + ?Sized>(&mut self, now: SimTime, rng: &mut R) {
        self.interval_ms = DIO_MIN_INTERVAL_MS;
        self.interval_start = now;
        self.pick(rng);
    }

    /// Called after the DIO went out; schedules the next one.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.interval_start = self.interval_start + self.interval_ms;
        self.interval_ms = (self.interval_ms * 2).min(DIO_MAX_INTERVAL_MS);
        self.pick(rng);
    }

    pub fn stop(&mut self) {
        self.fire_at = None;
    }
}
