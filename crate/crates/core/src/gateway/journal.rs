//! Append-only record journal with a separate ack log.
//!
//! Entry: `[mote_id u16 BE][receive_time_ms u64 BE][20-byte record]`.
//! Ack log: a sequence of u64 BE byte offsets into the entry log.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::mote::record::{SampleRecord, SAMPLE_WIRE_LEN};

pub const JOURNAL_ENTRY_LEN: usize = 2 + 8 + SAMPLE_WIRE_LEN;

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("journal I/O: {0}")]
    Io(#[from] io::Error),
    #[error("journal length {0} is not a whole number of entries")]
    Torn(usize),
    #[error("ack log length {0} is not a multiple of 8")]
    TornAck(usize),
    #[error("ack offset {0} does not name an entry")]
    BadAck(u64),
    #[error("corrupt entry at offset {0}")]
    Corrupt(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JournalEntry {
    pub mote_id: u16,
    pub receive_time_ms: u64,
    pub record: SampleRecord,
}

impl JournalEntry {
    pub fn to_bytes(&self) -> [u8; JOURNAL_ENTRY_LEN] {
        let mut b = [0u8; JOURNAL_ENTRY_LEN];
        b[0..2].copy_from_slice(&self.mote_id.to_be_bytes());
        b[2..10].copy_from_slice(&self.receive_time_ms.to_be_bytes());
        b[10..].copy_from_slice(&self.record.to_bytes());
        b
    }

    pub fn from_bytes(b: &[u8]) -> Option<Self> {
        if b.len() != JOURNAL_ENTRY_LEN {
            return None;
        }
        Some(JournalEntry {
            mote_id: u16::from_be_bytes([b[0], b[1]]),
            receive_time_ms: u64::from_be_bytes(b[2..10].try_into().ok()?),
            record: SampleRecord::from_bytes(&b[10..]).ok()?,
        })
    }
}

/// Durable backing for the two logs.
pub trait JournalStore {
    fn append_entry(&mut self, bytes: &[u8]) -> io::Result<()>;
    fn append_ack(&mut self, offset: u64) -> io::Result<()>;
    fn load(&mut self) -> io::Result<(Vec<u8>, Vec<u8>)>;
}

#[derive(Debug, Clone, Default)]
pub struct MemoryStore {
    pub entries: Vec<u8>,
    pub acks: Vec<u8>,
}

impl JournalStore for MemoryStore {
    fn append_entry(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.entries.extend_from_slice(bytes);
        Ok(())
    }

    fn append_ack(&mut self, offset: u64) -> io::Result<()> {
        self.acks.extend_from_slice(&offset.to_be_bytes());
        Ok(())
    }

    fn load(&mut self) -> io::Result<(Vec<u8>, Vec<u8>)> {
        Ok((self.entries.clone(), self.acks.clone()))
    }
}

/// `journal.bin` and `journal.ack` in one directory.
#[derive(Debug)]
pub struct FileStore {
    entry_path: PathBuf,
    ack_path: PathBuf,
    entries: File,
    acks: File,
}

impl FileStore {
    pub fn open(dir: &Path) -> io::Result<Self> {
        let entry_path = dir.join("journal.bin");
        let ack_path = dir.join("journal.ack");
        let open = |p: &Path| OpenOptions::new().create(true).append(true).open(p);
        Ok(FileStore {
            entries: open(&entry_path)?,
            acks: open(&ack_path)?,
            entry_path,
            ack_path,
        })
    }
}

impl JournalStore for FileStore {
    fn append_entry(&mut self, bytes: &[u8]) -> io::Result<()> {
        self.entries.write_all(bytes)
    }

    fn append_ack(&mut self, offset: u64) -> io::Result<()> {
        self.acks.write_all(&offset.to_be_bytes())
    }

    fn load(&mut self) -> io::Result<(Vec<u8>, Vec<u8>)> {
        self.entries.flush()?;
        self.acks.flush()?;
        let mut e = Vec::new();
        File::open(&self.entry_path)?.read_to_end(&mut e)?;
        let mut a = Vec::new();
        File::open(&self.ack_path)?.read_to_end(&mut a)?;
        Ok((e, a))
    }
}

/// Journal index plus the durable store behind it. Entry `i` lives at byte
/// offset `i * JOURNAL_ENTRY_LEN`.
#[derive(Debug)]
pub struct Journal<S> {
    store: S,
    entries: Vec<JournalEntry>,
    acked: Vec<bool>,
    unacked: usize,
}

impl<S: JournalStore> Journal<S> {
    /// Open `store`, rebuilding the index from whatever it already holds.
    pub fn open(mut store: S) -> Result<Self, JournalError> {
        let (entries, acked) = Self::index(&mut store)?;
        let unacked = acked.iter().filter(|a| !**a).count();
        Ok(Journal {
            store,
            entries,
            acked,
            unacked,
        })
    }

    /// Drop the in-memory index and rebuild it from the store, as a process
    /// restart would.
    pub fn reload(&mut self) -> Result<(), JournalError> {
        let (entries, acked) = Self::index(&mut self.store)?;
        self.unacked = acked.iter().filter(|a| !**a).count();
        self.entries = entries;
        self.acked = acked;
        Ok(())
    }

    fn index(store: &mut S) -> Result<(Vec<JournalEntry>, Vec<bool>), JournalError> {
        let (raw, acks) = store.load()?;
        if raw.len() % JOURNAL_ENTRY_LEN != 0 {
            return Err(JournalError::Torn(raw.len()));
        }
        if acks.len() % 8 != 0 {
            return Err(JournalError::TornAck(acks.len()));
        }
        let entries = raw
            .chunks_exact(JOURNAL_ENTRY_LEN)
            .enumerate()
            .map(|(i, c)| JournalEntry::from_bytes(c).ok_or(JournalError::Corrupt((i * JOURNAL_ENTRY_LEN) as u64)))
            .collect::<Result<Vec<_>, _>>()?;
        let mut acked = vec![false; entries.len()];
        for off in acks.chunks_exact(8) {
            let off = u64::from_be_bytes(off.try_into().expect("8 bytes"));
            let idx = off as usize / JOURNAL_ENTRY_LEN;
            if !(off as usize).is_multiple_of(JOURNAL_ENTRY_LEN) || idx >= entries.len() {
                return Err(JournalError::BadAck(off));
            }
            acked[idx] = true;
        }
        Ok((entries, acked))
    }

    pub fn append(&mut self, entry: JournalEntry) -> Result<u64, JournalError> {
        self.store.append_entry(&entry.to_bytes())?;
        self.entries.push(entry);
        self.acked.push(false);
        self.unacked += 1;
        Ok(self.entries.len() as u64 - 1)
    }

    /// Mark entry `idx` acked. Repeat acks are ignored and not logged.
    pub fn ack(&mut self, idx: u64) -> Result<bool, JournalError> {
        let i = idx as usize;
        match self.acked.get(i) {
            None => Err(JournalError::BadAck(idx * JOURNAL_ENTRY_LEN as u64)),
            Some(true) => Ok(false),
            Some(false) => {
                self.store.append_ack(idx * JOURNAL_ENTRY_LEN as u64)?;
                self.acked[i] = true;
                self.unacked -= 1;
                Ok(true)
            }
        }
    }

    pub fn get(&self, idx: u64) -> Option<&JournalEntry> {
        self.entries.get(idx as usize)
    }

    pub fn is_acked(&self, idx: u64) -> bool {
        self.acked.get(idx as usize).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn unacked_count(&self) -> usize {
        self.unacked
    }

    pub fn acked_count(&self) -> usize {
        self.entries.len() - self.unacked
    }

    pub fn size_bytes(&self) -> u64 {
        (self.entries.len() * JOURNAL_ENTRY_LEN) as u64
    }

    /// Unacked entry indices in journal order.
    pub fn unacked(&self) -> impl Iterator<Item = u64> + '_ {
        self.acked
            .iter()
            .enumerate()
            .filter(|(_, a)| !**a)
            .map(|(i, _)| i as u64)
    }

    pub fn store(&self) -> &S {
        &self.store
    }

    pub fn into_store(self) -> S {
        self.store
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(mote: u16, counter: u32) -> JournalEntry {
        JournalEntry {
            mote_id: mote,
            receive_time_ms: 1000 + u64::from(counter),
            record: SampleRecord::new(counter, [1, 2, 3, 4]),
        }
    }

    #[test]
    fn entry_layout() {
        let e = entry(3, 41);
        let b = e.to_bytes();
        assert_eq!(b.len(), 30);
        assert_eq!(&b[0..2], &[0, 3]);
        assert_eq!(&b[2..10], &1041u64.to_be_bytes());
        assert_eq!(&b[10..14], &41u32.to_be_bytes());
        assert_eq!(JournalEntry::from_bytes(&b), Some(e));
    }

    #[test]
    fn ack_is_idempotent_and_logged_once() {
        let mut j = Journal::open(MemoryStore::default()).unwrap();
        for c in 0..3 {
            assert_eq!(j.append(entry(1, c)).unwrap(), u64::from(c));
        }
        assert!(j.ack(1).unwrap());
        assert!(!j.ack(1).unwrap());
        assert!(j.ack(7).is_err());
        assert_eq!(j.unacked().collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(j.store().acks, 30u64.to_be_bytes().to_vec());
        assert_eq!((j.acked_count(), j.unacked_count()), (1, 2));
    }

    #[test]
    fn reopen_restores_state() {
        let mut j = Journal::open(MemoryStore::default()).unwrap();
        for c in 0..5 {
            j.append(entry(2, c)).unwrap();
        }
        j.ack(0).unwrap();
        j.ack(3).unwrap();
        let j2 = Journal::open(j.into_store()).unwrap();
        assert_eq!(j2.len(), 5);
        assert_eq!(j2.unacked().collect::<Vec<_>>(), vec![1, 2, 4]);
        assert_eq!(j2.get(4), Some(&entry(2, 4)));
    }

    #[test]
    fn torn_logs_rejected() {
        let store = MemoryStore {
            entries: vec![0; 31],
            acks: vec![],
        };
        assert!(matches!(Journal::open(store), Err(JournalError::Torn(31))));
        let store = MemoryStore {
            entries: entry(1, 1).to_bytes().to_vec(),
            acks: 60u64.to_be_bytes().to_vec(),
        };
        assert!(matches!(Journal::open(store), Err(JournalError::BadAck(60))));
    }

    #[test]
    fn file_store_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut j = Journal::open(FileStore::open(dir.path()).unwrap()).unwrap();
            for c in 0..4 {
                j.append(entry(9, c)).unwrap();
            }
            j.ack(2).unwrap();
        }
        let j = Journal::open(FileStore::open(dir.path()).unwrap()).unwrap();
        assert_eq!(j.unacked().collect::<Vec<_>>(), vec![0, 1, 3]);
        assert_eq!(std::fs::metadata(dir.path().join("journal.bin")).unwrap().len(), 120);
        assert_eq!(std::fs::metadata(dir.path().join("journal.ack")).unwrap().len(), 8);
    }
}
