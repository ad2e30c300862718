//! Per-stream collection queues behind one interface, so the engine runs
//! the same over memory (simulation) and memory-mapped segments (daemon).

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::mmq::{Queue, QueueConfig, QueueError};

pub trait StreamQueues: Send {
    fn append(&mut self, stream: &str, payload: &[u8], ts: u64) -> Result<u64, QueueError>;
    fn read(&mut self, stream: &str, from: u64, max: usize) -> Result<Vec<(u64, Vec<u8>)>, QueueError>;
    fn head(&mut self, stream: &str) -> u64;
    fn committed(&mut self, stream: &str, consumer: &str) -> u64;
    fn commit(&mut self, stream: &str, consumer: &str, offset: u64) -> Result<(), QueueError>;
    fn streams(&self) -> Vec<String>;
    fn flush(&mut self) -> Result<(), QueueError>;
}

#[derive(Debug, Default)]
struct MemStream {
    records: Vec<Vec<u8>>,
    cursors: BTreeMap<String, u64>,
}

#[derive(Debug, Default)]
pub struct MemQueues {
    streams: BTreeMap<String, MemStream>,
}

impl MemQueues {
    pub fn new() -> Self {
        Self::default()
    }
}

impl StreamQueues for MemQueues {
    fn append(&mut self, stream: &str, payload: &[u8], _ts: u64) -> Result<u64, QueueError> {
        let s = self.streams.entry(stream.to_string()).or_default();
        s.records.push(payload.to_vec());
        Ok(s.records.len() as u64 - 1)
    }

    fn read(&mut self, stream: &str, from: u64, max: usize) -> Result<Vec<(u64, Vec<u8>)>, QueueError> {
        let Some(s) = self.streams.get(stream) else {
            return Ok(Vec::new());
        };
        Ok(s.records
            .iter()
            .enumerate()
            .skip(from as usize)
            .take(max)
            .map(|(i, r)| (i as u64, r.clone()))
            .collect())
    }

    fn head(&mut self, stream: &str) -> u64 {
        self.streams.get(stream).map_or(0, |s| s.records.len() as u64)
    }

    fn committed(&mut self, stream: &str, consumer: &str) -> u64 {
        self.streams
            .get(stream)
            .and_then(|s| s.cursors.get(consumer).copied())
            .unwrap_or(0)
    }

    fn commit(&mut self, stream: &str, consumer: &str, offset: u64) -> Result<(), QueueError> {
        let s = self.streams.entry(stream.to_string()).or_default();
        let head = s.records.len() as u64;
        if offset > head {
            return Err(QueueError::CommitBeyondHead { requested: offset, head });
        }
        let cur = s.cursors.entry(consumer.to_string()).or_insert(0);
        if offset < *cur {
            return Err(QueueError::CommitRegressed {
                consumer: consumer.to_string(),
                committed: *cur,
                requested: offset,
            });
        }
        *cur = offset;
        Ok(())
    }

    fn streams(&self) -> Vec<String> {
        self.streams.keys().cloned().collect()
    }

    fn flush(&mut self) -> Result<(), QueueError> {
        Ok(())
    }
}

/// One memory-mapped queue per stream under a root directory.
pub struct DirQueues {
    root: PathBuf,
    cfg: QueueConfig,
    open: BTreeMap<String, Queue>,
}

impl DirQueues {
    /// Opens every stream directory already present under `root`.
    pub fn open(root: impl Into<PathBuf>, cfg: QueueConfig) -> Result<Self, QueueError> {
        let root = root.into();
        std::fs::create_dir_all(&root).map_err(QueueError::from)?;
        let mut q = DirQueues {
            root,
            cfg,
            open: BTreeMap::new(),
        };
        let mut names = Vec::new();
        for e in std::fs::read_dir(&q.root).map_err(QueueError::from)? {
            let e = e.map_err(QueueError::from)?;
            if e.path().is_dir() {
                names.push(e.file_name().to_string_lossy().into_owned());
            }
        }
        names.sort();
        for n in names {
            q.queue(&n)?;
        }
        Ok(q)
    }

    fn queue(&mut self, stream: &str) -> Result<&mut Queue, QueueError> {
        if !self.open.contains_key(stream) {
            let q = Queue::open(&self.root.join(stream), self.cfg.clone())?;
            self.open.insert(stream.to_string(), q);
        }
        Ok(self.open.get_mut(stream).expect("just opened"))
    }
}

fn valid_name(stream: &str) -> Result<(), QueueError> {
    let ok = !stream.is_empty()
        && stream
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(QueueError::BadConsumer(format!("stream name {stream:?}")))
    }
}

impl StreamQueues for DirQueues {
    fn append(&mut self, stream: &str, payload: &[u8], ts: u64) -> Result<u64, QueueError> {
        valid_name(stream)?;
        self.queue(stream)?.append_at(payload, ts)
    }

    fn read(&mut self, stream: &str, from: u64, max: usize) -> Result<Vec<(u64, Vec<u8>)>, QueueError> {
        match self.open.get_mut(stream) {
            Some(q) => Ok(q
                .read(from, max)?
                .into_iter()
                .map(|r| (r.offset, r.payload))
                .collect()),
            None => Ok(Vec::new()),
        }
    }

    fn head(&mut self, stream: &str) -> u64 {
        self.open.get(stream).map_or(0, Queue::head)
    }

    fn committed(&mut self, stream: &str, consumer: &str) -> u64 {
        self.open.get(stream).map_or(0, |q| q.committed(consumer))
    }

    fn commit(&mut self, stream: &str, consumer: &str, offset: u64) -> Result<(), QueueError> {
        valid_name(stream)?;
        self.queue(stream)?.commit(consumer, offset)
    }

    fn streams(&self) -> Vec<String> {
        self.open.keys().cloned().collect()
    }

    fn flush(&mut self) -> Result<(), QueueError> {
        for q in self.open.values_mut() {
            q.flush()?;
        }
        Ok(())
    }
}
