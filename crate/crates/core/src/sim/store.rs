use std::collections::HashMap;
use std::sync::Arc;

use crate::blocked::BlockKey;
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

pub type Payload = Arc<DenseMatrix>;

/// Running totals over every store call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StoreCounters {
    pub messages: u64,
    pub bytes_read: u64,
    pub bytes_written: u64,
}

/// The single shared storage entity workers read from and write to.
///
/// Keys are write-once while live: a second `put` to the same key fails until
/// the key is deleted.
#[derive(Debug, Default)]
pub struct ObjectStore {
    blocks: HashMap<BlockKey, Payload>,
    counters: StoreCounters,
}

pub(crate) fn payload_bytes(entries: usize) -> u64 {
    8 * entries as u64
}

impl ObjectStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn put(&mut self, key: BlockKey, payload: impl Into<Payload>) -> Result<()> {
        let payload = payload.into();
        if self.blocks.contains_key(&key) {
            return Err(Error::WriteConflict(key));
        }
        self.counters.messages += 1;
        self.counters.bytes_written += payload_bytes(payload.len());
        self.blocks.insert(key, payload);
        Ok(())
    }

    pub fn get(&mut self, key: &BlockKey) -> Result<Payload> {
        let payload = self
            .blocks
            .get(key)
            .cloned()
            .ok_or(Error::MissingBlock(*key))?;
        self.counters.messages += 1;
        self.counters.bytes_read += payload_bytes(payload.len());
        Ok(payload)
    }

    /// Reads without touching the counters. Used for assembling results on
    /// the client side and by tests.
    pub fn peek(&self, key: &BlockKey) -> Option<&Payload> {
        self.blocks.get(key)
    }

    pub fn contains(&self, key: &BlockKey) -> bool {
        self.blocks.contains_key(key)
    }

    pub fn delete(&mut self, key: &BlockKey) -> Option<Payload> {
        self.blocks.remove(key)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Drops every block; counters keep their totals.
    pub fn clear(&mut self) {
        self.blocks.clear();
    }

    pub fn counters(&self) -> StoreCounters {
        self.counters
    }

    /// Uploads issued by the client before a job starts are not worker
    /// traffic, so they bypass the counters.
    pub(crate) fn seed(&mut self, key: BlockKey, payload: Payload) -> Result<()> {
        if self.blocks.contains_key(&key) {
            return Err(Error::WriteConflict(key));
        }
        self.blocks.insert(key, payload);
        Ok(())
    }
}
