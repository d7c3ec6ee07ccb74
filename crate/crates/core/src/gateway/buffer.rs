use std::collections::VecDeque;

/// Per-mote samples per day at 0.25 samples/s.
pub const RECORDS_PER_MOTE_DAY: usize = 24 * 3600 / 4;

/// Enough for 24 h of production with no consumption.
pub fn capacity_for(motes: usize) -> usize {
    motes * RECORDS_PER_MOTE_DAY
}

/// Bounded FIFO. A full buffer refuses the push and hands the item back.
#[derive(Debug, Clone)]
pub struct BoundedBuffer<T> {
    items: VecDeque<T>,
    capacity: usize,
    max_depth: usize,
}

impl<T> BoundedBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        BoundedBuffer {
            items: VecDeque::new(),
            capacity,
            max_depth: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.items.len() >= self.capacity
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    pub fn push(&mut self, item: T) -> Result<(), T> {
        if self.is_full() {
            return Err(item);
        }
        self.items.push_back(item);
        self.max_depth = self.max_depth.max(self.items.len());
        Ok(())
    }

    /// Up to `n` items from the front, left in place.
    pub fn peek(&self, n: usize) -> impl Iterator<Item = &T> {
        self.items.iter().take(n)
    }

    pub fn pop(&mut self, n: usize) -> Vec<T> {
        let n = n.min(self.items.len());
        self.items.drain(..n).collect()
    }

    pub fn clear(&mut self) {
        self.items.clear();
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }
}
