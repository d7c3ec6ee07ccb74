//! Thread-safe buffer for running producer and consumer as real threads.

use std::sync::{Condvar, Mutex, MutexGuard, PoisonError};
use std::time::Duration;

use super::buffer::BoundedBuffer;

#[derive(Debug)]
struct Inner<T> {
    buf: BoundedBuffer<T>,
    closed: bool,
}

/// Linearizable bounded FIFO. Producers never block: a full buffer hands
/// the item back (journal-and-shed). Consumers wait for data or close.
#[derive(Debug)]
pub struct SharedBuffer<T> {
    inner: Mutex<Inner<T>>,
    ready: Condvar,
}

impl<T> SharedBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        SharedBuffer {
            inner: Mutex::new(Inner {
                buf: BoundedBuffer::new(capacity),
                closed: false,
            }),
            ready: Condvar::new(),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Inner<T>> {
        self.inner.lock().unwrap_or_else(PoisonError::into_inner)
    }

    pub fn push(&self, item: T) -> Result<(), T> {
        let r = self.lock().buf.push(item);
        if r.is_ok() {
            self.ready.notify_one();
        }
        r
    }

    /// No more pushes; wakes waiting consumers.
    pub fn close(&self) {
        self.lock().closed = true;
        self.ready.notify_all();
    }

    pub fn len(&self) -> usize {
        self.lock().buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_depth(&self) -> usize {
        self.lock().buf.max_depth()
    }

    /// Wait up to `timeout` for data, then take up to `max` items. An empty
    /// result with the buffer closed means the stream is over.
    pub fn pop_batch(&self, max: usize, timeout: Duration) -> (Vec<T>, bool) {
        let guard = self.lock();
        let (mut guard, _) = self
            .ready
            .wait_timeout_while(guard, timeout, |i| i.buf.is_empty() && !i.closed)
            .unwrap_or_else(PoisonError::into_inner);
        let batch = guard.buf.pop(max);
        let done = guard.closed && guard.buf.is_empty();
        (batch, done)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;
    use std::thread;

    #[test]
    fn producers_and_consumer_lose_nothing() {
        const PER: u32 = 5000;
        let buf = Arc::new(SharedBuffer::new(64));
        let producers: Vec<_> = (0..4u16)
            .map(|mote| {
                let buf = Arc::clone(&buf);
                thread::spawn(move || {
                    for c in 0..PER {
                        let mut item = (mote, c);
                        // spin until there is room; shedding is tested elsewhere
                        while let Err(back) = buf.push(item) {
                            item = back;
                            thread::yield_now();
                        }
                    }
                })
            })
            .collect();
        let consumer = {
            let buf = Arc::clone(&buf);
            thread::spawn(move || {
                let mut seen: Vec<Vec<u32>> = vec![Vec::new(); 4];
                loop {
                    let (batch, done) = buf.pop_batch(100, Duration::from_millis(10));
                    for (m, c) in batch {
                        seen[m as usize].push(c);
                    }
                    if done {
                        return seen;
                    }
                }
            })
        };
        for p in producers {
            p.join().unwrap();
        }
        buf.close();
        let seen = consumer.join().unwrap();
        for per_mote in seen {
            assert_eq!(per_mote, (0..PER).collect::<Vec<_>>());
        }
        assert!(buf.max_depth() <= 64);
    }

    #[test]
    fn full_buffer_hands_item_back() {
        let buf = SharedBuffer::new(1);
        assert_eq!(buf.push(1), Ok(()));
        assert_eq!(buf.push(2), Err(2));
        let (b, done) = buf.pop_batch(10, Duration::ZERO);
        assert_eq!((b, done), (vec![1], false));
        buf.close();
        assert_eq!(buf.pop_batch(10, Duration::from_secs(5)), (vec![], true));
    }
}
