//! Push/pull streaming between rendezvous-matched peers. Sessions are
//! at-least-once: the producer keeps unacknowledged records and resends from
//! the last acknowledged sequence number; the receiver drops anything it has
//! already appended.

use std::collections::{HashMap, VecDeque};

use sha2::{Digest, Sha256};

use super::{hex, Profile};

/// Queue name derived from a profile.
pub fn stream_key(profile: &Profile) -> String {
    let d = Sha256::digest(profile.canonical().as_bytes());
    format!("s{}", hex(&d[..8]))
}

/// Producer side of a push stream to one peer.
#[derive(Debug, Clone)]
pub struct PushSession {
    pub stream: String,
    pub peer: String,
    /// Records from `acked` onward; index 0 has sequence number `acked`.
    pending: VecDeque<Vec<u8>>,
    acked: u64,
    sent: u64,
}

impl PushSession {
    pub fn new(stream: impl Into<String>, peer: impl Into<String>) -> Self {
        PushSession {
            stream: stream.into(),
            peer: peer.into(),
            pending: VecDeque::new(),
            acked: 0,
            sent: 0,
        }
    }

    pub fn enqueue(&mut self, record: Vec<u8>) {
        self.pending.push_back(record);
    }

    pub fn acked(&self) -> u64 {
        self.acked
    }

    pub fn sent(&self) -> u64 {
        self.sent
    }

    /// Total records ever enqueued.
    pub fn produced(&self) -> u64 {
        self.acked + self.pending.len() as u64
    }

    pub fn is_drained(&self) -> bool {
        self.pending.is_empty()
    }

    /// Next unsent records, at most `max`, with the sequence number of the
    /// first one.
    pub fn next_batch(&mut self, max: usize) -> Option<(u64, Vec<Vec<u8>>)> {
        let start = (self.sent - self.acked) as usize;
        if start >= self.pending.len() {
            return None;
        }
        let batch: Vec<Vec<u8>> = self.pending.iter().skip(start).take(max).cloned().collect();
        let seq = self.sent;
        self.sent += batch.len() as u64;
        Some((seq, batch))
    }

    /// The peer has durably appended everything below `acked`.
    pub fn on_ack(&mut self, acked: u64) {
        if acked <= self.acked {
            return;
        }
        let acked = acked.min(self.produced());
        let n = (acked - self.acked) as usize;
        self.pending.drain(..n);
        self.acked = acked;
        self.sent = self.sent.max(acked);
    }

    /// The connection broke: rewind to the last acknowledged record.
    pub fn on_broken(&mut self) {
        self.sent = self.acked;
    }
}

/// Receiver-side dedup state: next expected sequence number per
/// (stream, producer).
#[derive(Debug, Default, Clone)]
pub struct StreamReceiver {
    next: HashMap<(String, String), u64>,
}

impl StreamReceiver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the records not yet seen from this producer (those to append)
    /// and the acknowledgment to send back. Records beyond a gap are refused.
    pub fn accept<'a>(
        &mut self,
        stream: &str,
        producer: &str,
        seq: u64,
        records: &'a [Vec<u8>],
    ) -> (&'a [Vec<u8>], u64) {
        let next = self
            .next
            .entry((stream.to_string(), producer.to_string()))
            .or_insert(0);
        if seq > *next {
            return (&[], *next);
        }
        let skip = ((*next - seq) as usize).min(records.len());
        let fresh = &records[skip..];
        *next += fresh.len() as u64;
        (fresh, *next)
    }

    /// Seeds the next expected sequence number, e.g. from a persisted
    /// cursor after a restart.
    pub fn resume(&mut self, stream: &str, producer: &str, next: u64) {
        let e = self
            .next
            .entry((stream.to_string(), producer.to_string()))
            .or_insert(0);
        *e = (*e).max(next);
    }

    pub fn expected(&self, stream: &str, producer: &str) -> u64 {
        self.next
            .get(&(stream.to_string(), producer.to_string()))
            .copied()
            .unwrap_or(0)
    }
}
