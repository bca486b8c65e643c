//! Append-only event log: `[u32 len][u32 crc32][json payload]`, little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EventEnvelope;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptRecord {
    /// Byte offset of the first record that could not be read.
    pub offset: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventLog {
    bytes: Vec<u8>,
    records: usize,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, ev: &EventEnvelope) {
        let body = serde_json::to_vec(ev).expect("envelopes serialize");
        self.bytes.extend_from_slice(&(body.len() as u32).to_le_bytes());
        self.bytes.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
        self.bytes.extend_from_slice(&body);
        self.records += 1;
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn len(&self) -> usize {
        self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records == 0
    }

    pub fn write_to(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, &self.bytes)
    }
}

/// Decode records until the end or the first bad one.
pub fn decode(bytes: &[u8]) -> (Vec<EventEnvelope>, Option<CorruptRecord>) {
    let mut out = Vec::new();
    let mut at = 0;
    while at < bytes.len() {
        let Some(head) = bytes.get(at..at + 8) else {
            return (out, Some(CorruptRecord { offset: at }));
        };
        let len = u32::from_le_bytes(head[..4].try_into().unwrap()) as usize;
        let crc = u32::from_le_bytes(head[4..].try_into().unwrap());
        let Some(body) = bytes.get(at + 8..at + 8 + len) else {
            return (out, Some(CorruptRecord { offset: at }));
        };
        if crc32fast::hash(body) != crc {
            return (out, Some(CorruptRecord { offset: at }));
        }
        match serde_json::from_slice(body) {
            Ok(ev) => out.push(ev),
            Err(_) => return (out, Some(CorruptRecord { offset: at })),
        }
        at += 8 + len;
    }
    (out, None)
}
