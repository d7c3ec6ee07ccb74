//! Contiki-style process table and kernel event queue.
//!
//! A handler posts events; the kernel delivers them in FIFO order once the
//! running handler has returned, all within the same virtual instant.

use std::collections::{BTreeSet, VecDeque};

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProcessId(pub u8);

pub const ADC_PROCESS: ProcessId = ProcessId(1);
pub const UDP_SERVER_PROCESS: ProcessId = ProcessId(2);

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ProcessError {
    #[error("no process registered with id {0:?}")]
    UnknownProcess(ProcessId),
}

/// An event waiting in the kernel queue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Posted<E> {
    pub source: ProcessId,
    pub target: ProcessId,
    pub payload: E,
}

#[derive(Debug, Clone)]
pub struct ProcessKernel<E> {
    registered: BTreeSet<ProcessId>,
    queue: VecDeque<Posted<E>>,
    delivered: u64,
}

impl<E> Default for ProcessKernel<E> {
    fn default() -> Self {
        ProcessKernel {
            registered: BTreeSet::new(),
            queue: VecDeque::new(),
            delivered: 0,
        }
    }
}

impl<E> ProcessKernel<E> {
    pub fn register(&mut self, id: ProcessId) {
        self.registered.insert(id);
    }

    pub fn is_registered(&self, id: ProcessId) -> bool {
        self.registered.contains(&id)
    }

    pub fn post(&mut self, source: ProcessId, target: ProcessId, payload: E) -> Result<(), ProcessError> {
        if !self.registered.contains(&target) {
            return Err(ProcessError::UnknownProcess(target));
        }
        self.queue.push_back(Posted {
            source,
            target,
            payload,
        });
        Ok(())
    }

    /// Next event to deliver. Each posted event comes out exactly once.
    pub fn next_event(&mut self) -> Option<Posted<E>> {
        let ev = self.queue.pop_front()?;
        self.delivered += 1;
        Some(ev)
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }
}
