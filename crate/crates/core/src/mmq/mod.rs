//! Crash-safe data-collection queue over memory-mapped append-only
//! segments.
//!
//! Offsets are dense from zero. Records reach the page cache as soon as
//! `append` returns, so they survive a process crash; power loss needs
//! `flush` or a configured sync interval.

pub mod segment;

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io;
use std::os::fd::AsRawFd;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use memmap2::{Mmap, MmapMut};
use thiserror::Error;

use segment::{Parsed, HEADER_LEN};

#[derive(Debug, Error)]
pub enum QueueError {
    #[error("append failed: {0}")]
    AppendFailed(io::Error),
    #[error("payload of {len} bytes exceeds the {max} byte record cap")]
    PayloadTooLarge { len: usize, max: usize },
    #[error("offset {offset} was trimmed by retention")]
    OffsetTrimmed { offset: u64 },
    #[error("queue corrupt: {0}")]
    QueueCorrupt(String),
    #[error("queue is locked by another writer")]
    Locked,
    #[error("commit for {consumer} regresses from {committed} to {requested}")]
    CommitRegressed {
        consumer: String,
        committed: u64,
        requested: u64,
    },
    #[error("commit offset {requested} is beyond head {head}")]
    CommitBeyondHead { requested: u64, head: u64 },
    #[error("bad consumer id {0:?}")]
    BadConsumer(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueueRecord {
    pub offset: u64,
    pub timestamp: u64,
    pub crc: u32,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct QueueConfig {
    pub segment_size: u64,
    pub max_record: usize,
    /// Sealed segments kept before retention may delete them.
    pub retention_segments: Option<usize>,
    pub sync_interval: Option<Duration>,
}

impl Default for QueueConfig {
    fn default() -> Self {
        QueueConfig {
            segment_size: 64 << 20,
            max_record: 16 << 20,
            retention_segments: None,
            sync_interval: None,
        }
    }
}

struct Shared {
    dir: PathBuf,
    head: AtomicU64,
    segments: RwLock<Vec<u64>>,
}

impl Shared {
    fn segment_path(&self, base: u64) -> PathBuf {
        self.dir.join(segment::file_name(base))
    }
}

struct View {
    map: Arc<Mmap>,
    /// Byte position of each record scanned so far.
    positions: Vec<u32>,
}

/// Read handle that only ever observes published records.
pub struct QueueReader {
    shared: Arc<Shared>,
    views: BTreeMap<u64, View>,
}

impl QueueReader {
    pub fn head(&self) -> u64 {
        self.shared.head.load(Ordering::Acquire)
    }

    fn view(&mut self, base: u64) -> Result<&mut View, QueueError> {
        if !self.views.contains_key(&base) {
            let file = File::open(self.shared.segment_path(base)).map_err(|e| {
                if e.kind() == io::ErrorKind::NotFound {
                    QueueError::OffsetTrimmed { offset: base }
                } else {
                    e.into()
                }
            })?;
            // SAFETY: segment files are only ever extended by this process
            // before they are published and bytes below the head are never
            // rewritten.
            let map = unsafe { Mmap::map(&file)? };
            if segment::read_header(&map) != Some(base) {
                return Err(QueueError::QueueCorrupt(format!("bad header in segment {base}")));
            }
            self.views.insert(
                base,
                View {
                    map: Arc::new(map),
                    positions: Vec::new(),
                },
            );
        }
        Ok(self.views.get_mut(&base).unwrap())
    }

    /// Records from `from` on, at most `max`, in offset order.
    pub fn read(&mut self, from: u64, max: usize) -> Result<Vec<QueueRecord>, QueueError> {
        let head = self.head();
        let mut out = Vec::new();
        let mut offset = from;
        while offset < head && out.len() < max {
            let segs = self.shared.segments.read().unwrap().clone();
            let idx = segs.partition_point(|&b| b <= offset);
            if idx == 0 {
                return Err(QueueError::OffsetTrimmed { offset });
            }
            let base = segs[idx - 1];
            let end = segs.get(idx).copied().unwrap_or(head).min(head);
            self.views.retain(|&b, _| b >= segs[0]);
            let view = self.view(base)?;
            while offset < end && out.len() < max {
                let i = (offset - base) as usize;
                while view.positions.len() <= i {
                    let at = match view.positions.last() {
                        None => HEADER_LEN,
                        Some(&p) => match segment::parse_record(&view.map, p as usize) {
                            Parsed::Record { size, .. } => p as usize + size,
                            _ => return Err(corrupt(base, p as usize)),
                        },
                    };
                    view.positions.push(at as u32);
                }
                let at = view.positions[i] as usize;
                match segment::parse_record(&view.map, at) {
                    Parsed::Record {
                        crc,
                        timestamp,
                        payload,
                        ..
                    } => out.push(QueueRecord {
                        offset,
                        timestamp,
                        crc,
                        payload: payload.to_vec(),
                    }),
                    _ => return Err(corrupt(base, at)),
                }
                offset += 1;
            }
        }
        Ok(out)
    }
}

fn corrupt(base: u64, at: usize) -> QueueError {
    QueueError::QueueCorrupt(format!("invalid record at byte {at} of segment {base}"))
}

struct Active {
    map: MmapMut,
    cursor: usize,
}

pub struct Queue {
    shared: Arc<Shared>,
    cfg: QueueConfig,
    _lock: File,
    active: Active,
    cursors: BTreeMap<String, u64>,
    reader: QueueReader,
    last_sync: Instant,
}

const CURSORS: &str = "cursors.tsv";
const LOCK: &str = ".lock";

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn reserve(file: &File, len: u64) -> io::Result<()> {
    file.set_len(len)?;
    // SAFETY: plain syscall on an open descriptor.
    let rc = unsafe { libc::posix_fallocate(file.as_raw_fd(), 0, len as libc::off_t) };
    match rc {
        0 => Ok(()),
        libc::EOPNOTSUPP | libc::EINVAL => Ok(()),
        e => Err(io::Error::from_raw_os_error(e)),
    }
}

fn create_segment(dir: &Path, base: u64, size: u64) -> io::Result<MmapMut> {
    let path = dir.join(segment::file_name(base));
    let file = OpenOptions::new()
        .read(true)
        .write(true)
        .create_new(true)
        .open(&path)?;
    if let Err(e) = reserve(&file, size) {
        drop(file);
        let _ = fs::remove_file(&path);
        return Err(e);
    }
    // SAFETY: the file was just created by the single writer.
    let mut map = unsafe { MmapMut::map_mut(&file)? };
    segment::write_header(&mut map, base);
    Ok(map)
}

fn open_segment(dir: &Path, base: u64, min_size: u64) -> io::Result<MmapMut> {
    let file = OpenOptions::new()
        .read(true)
        .write(true)
        .open(dir.join(segment::file_name(base)))?;
    if file.metadata()?.len() < min_size {
        reserve(&file, min_size)?;
    }
    // SAFETY: guarded by the writer lock.
    unsafe { MmapMut::map_mut(&file) }
}

fn load_cursors(dir: &Path) -> Result<BTreeMap<String, u64>, QueueError> {
    let text = match fs::read_to_string(dir.join(CURSORS)) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(BTreeMap::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = BTreeMap::new();
    for line in text.lines().filter(|l| !l.is_empty()) {
        let (id, off) = line
            .split_once('\t')
            .ok_or_else(|| QueueError::QueueCorrupt(format!("bad cursor line {line:?}")))?;
        let off = off
            .parse()
            .map_err(|_| QueueError::QueueCorrupt(format!("bad cursor line {line:?}")))?;
        out.insert(id.to_string(), off);
    }
    Ok(out)
}

impl Queue {
    /// Opens or recovers the queue in `dir`, truncating a torn tail.
    pub fn open(dir: &Path, cfg: QueueConfig) -> Result<Queue, QueueError> {
        fs::create_dir_all(dir)?;
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(dir.join(LOCK))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(fs::TryLockError::WouldBlock) => return Err(QueueError::Locked),
            Err(fs::TryLockError::Error(e)) => return Err(e.into()),
        }
        let mut bases: Vec<u64> = fs::read_dir(dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| segment::parse_file_name(&e.file_name().to_string_lossy()))
            .collect();
        bases.sort_unstable();
        let (active, head) = match bases.last() {
            None => {
                bases.push(0);
                (
                    Active {
                        map: create_segment(dir, 0, cfg.segment_size).map_err(QueueError::AppendFailed)?,
                        cursor: HEADER_LEN,
                    },
                    0,
                )
            }
            Some(&base) => {
                let mut map = open_segment(dir, base, HEADER_LEN as u64)?;
                if segment::read_header(&map) != Some(base) {
                    return Err(QueueError::QueueCorrupt(format!("bad header in segment {base}")));
                }
                let mut at = HEADER_LEN;
                let mut count = 0u64;
                while let Parsed::Record { size, .. } = segment::parse_record(&map, at) {
                    at += size;
                    count += 1;
                }
                // torn or garbage tail: clear it so the next append is clean
                map[at..].fill(0);
                map.flush()?;
                if (map.len() as u64) < cfg.segment_size {
                    drop(map);
                    map = open_segment(dir, base, cfg.segment_size)?;
                }
                (
                    Active {
                        map,
                        cursor: at,
                    },
                    base + count,
                )
            }
        };
        for &b in &bases[..bases.len() - 1] {
            let file = File::open(dir.join(segment::file_name(b)))?;
            let mut head_buf = [0u8; HEADER_LEN];
            use std::os::unix::fs::FileExt;
            if file.read_exact_at(&mut head_buf, 0).is_err() || segment::read_header(&head_buf) != Some(b) {
                return Err(QueueError::QueueCorrupt(format!("bad header in segment {b}")));
            }
        }
        let shared = Arc::new(Shared {
            dir: dir.to_path_buf(),
            head: AtomicU64::new(head),
            segments: RwLock::new(bases),
        });
        let mut cursors = load_cursors(dir)?;
        for v in cursors.values_mut() {
            *v = (*v).min(head);
        }
        Ok(Queue {
            reader: QueueReader {
                shared: shared.clone(),
                views: BTreeMap::new(),
            },
            shared,
            cfg,
            _lock: lock,
            active,
            cursors,
            last_sync: Instant::now(),
        })
    }

    pub fn head(&self) -> u64 {
        self.shared.head.load(Ordering::Acquire)
    }

    pub fn config(&self) -> &QueueConfig {
        &self.cfg
    }

    /// Bases of the segments currently on disk.
    pub fn segments(&self) -> Vec<u64> {
        self.shared.segments.read().unwrap().clone()
    }

    pub fn append(&mut self, payload: &[u8]) -> Result<u64, QueueError> {
        self.append_at(payload, now_ms())
    }

    pub fn append_at(&mut self, payload: &[u8], timestamp: u64) -> Result<u64, QueueError> {
        if payload.len() > self.cfg.max_record {
            return Err(QueueError::PayloadTooLarge {
                len: payload.len(),
                max: self.cfg.max_record,
            });
        }
        let size = segment::record_size(payload.len());
        if self.active.cursor + size > self.active.map.len() {
            self.roll(size)?;
        }
        segment::write_record(&mut self.active.map, self.active.cursor, timestamp, payload);
        self.active.cursor += size;
        let offset = self.head();
        self.shared.head.store(offset + 1, Ordering::Release);
        if let Some(every) = self.cfg.sync_interval {
            if self.last_sync.elapsed() >= every {
                self.active.map.flush_async()?;
                self.last_sync = Instant::now();
            }
        }
        Ok(offset)
    }

    fn roll(&mut self, need: usize) -> Result<(), QueueError> {
        let base = self.head();
        let size = self.cfg.segment_size.max((HEADER_LEN + need) as u64);
        let map = create_segment(&self.shared.dir, base, size).map_err(QueueError::AppendFailed)?;
        self.active.map.flush_async()?;
        self.active = Active {
            map,
            cursor: HEADER_LEN,
        };
        self.shared.segments.write().unwrap().push(base);
        self.apply_retention()?;
        Ok(())
    }

    /// Deletes the oldest sealed segments beyond the retention count once
    /// every registered cursor has moved past them.
    pub fn apply_retention(&mut self) -> Result<usize, QueueError> {
        let Some(keep) = self.cfg.retention_segments else {
            return Ok(0);
        };
        let slowest = self.cursors.values().copied().min().unwrap_or(u64::MAX);
        let mut removed = 0;
        loop {
            let segs = self.segments();
            let sealed = segs.len() - 1;
            if sealed <= keep || segs[1] > slowest {
                break;
            }
            fs::remove_file(self.shared.segment_path(segs[0]))?;
            self.shared.segments.write().unwrap().remove(0);
            removed += 1;
        }
        Ok(removed)
    }

    pub fn read(&mut self, from: u64, max: usize) -> Result<Vec<QueueRecord>, QueueError> {
        self.reader.read(from, max)
    }

    pub fn reader(&self) -> QueueReader {
        QueueReader {
            shared: self.shared.clone(),
            views: BTreeMap::new(),
        }
    }

    pub fn committed(&self, consumer: &str) -> u64 {
        self.cursors.get(consumer).copied().unwrap_or(0)
    }

    pub fn consumers(&self) -> &BTreeMap<String, u64> {
        &self.cursors
    }

    pub fn commit(&mut self, consumer: &str, offset: u64) -> Result<(), QueueError> {
        if consumer.is_empty() || consumer.contains(['\t', '\n']) {
            return Err(QueueError::BadConsumer(consumer.to_string()));
        }
        let head = self.head();
        if offset > head {
            return Err(QueueError::CommitBeyondHead {
                requested: offset,
                head,
            });
        }
        let committed = self.committed(consumer);
        if offset < committed {
            return Err(QueueError::CommitRegressed {
                consumer: consumer.to_string(),
                committed,
                requested: offset,
            });
        }
        self.cursors.insert(consumer.to_string(), offset);
        let text: String = self
            .cursors
            .iter()
            .map(|(k, v)| format!("{k}\t{v}\n"))
            .collect();
        let tmp = self.shared.dir.join("cursors.tsv.tmp");
        fs::write(&tmp, text)?;
        fs::rename(&tmp, self.shared.dir.join(CURSORS))?;
        Ok(())
    }

    /// Writes mapped pages back to disk.
    pub fn flush(&mut self) -> Result<(), QueueError> {
        self.active.map.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> QueueConfig {
        QueueConfig {
            segment_size: 4096,
            ..QueueConfig::default()
        }
    }

    #[test]
    fn dense_offsets_and_reads() {
        let dir = tempfile::tempdir().unwrap();
        let mut q = Queue::open(dir.path(), small()).unwrap();
        assert_eq!(q.head(), 0);
        assert!(q.read(0, 10).unwrap().is_empty());
        for (i, p) in ["a", "b", "c"].iter().enumerate() {
            assert_eq!(q.append(p.as_bytes()).unwrap(), i as u64);
        }
        let recs = q.read(0, usize::MAX).unwrap();
        assert_eq!(recs.iter().map(|r| r.payload.clone()).collect::<Vec<_>>(), vec![b"a".to_vec(), b"b".to_vec(), b"c".to_vec()]);
        assert!(q.read(3, 10).unwrap().is_empty());
        assert_eq!(q.read(1, 1).unwrap()[0].payload, b"b");
    }

    #[test]
    fn rollover_lands_at_computed_offset() {
        let dir = tempfile::tempdir().unwrap();
        let mut q = Queue::open(dir.path(), small()).unwrap();
        let payload = [7u8; 100];
        // (4096 - 16) / (16 + 100) records fit in the first segment
        let per_segment = (4096 - HEADER_LEN) / segment::record_size(100);
        for i in 0..=per_segment {
            q.append(&payload).unwrap();
            let expect = if i < per_segment { vec![0] } else { vec![0, per_segment as u64] };
            assert_eq!(q.segments(), expect);
        }
        assert!(dir.path().join(segment::file_name(per_segment as u64)).exists());
        let all = q.read(0, usize::MAX).unwrap();
        assert_eq!(all.len(), per_segment + 1);
        assert!(all.iter().enumerate().all(|(i, r)| r.offset == i as u64));
    }

    #[test]
    fn cursors_survive_restart() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut q = Queue::open(dir.path(), small()).unwrap();
            for i in 0..60u32 {
                q.append(&i.to_be_bytes()).unwrap();
            }
            q.commit("a", 50).unwrap();
            q.commit("b", 10).unwrap();
            assert!(matches!(q.commit("a", 40), Err(QueueError::CommitRegressed { .. })));
            assert!(matches!(q.commit("a", 61), Err(QueueError::CommitBeyondHead { .. })));
        }
        let mut q = Queue::open(dir.path(), small()).unwrap();
        assert_eq!(q.head(), 60);
        assert_eq!(q.committed("a"), 50);
        assert_eq!(q.committed("b"), 10);
        assert_eq!(q.committed("c"), 0);
        assert_eq!(q.read(q.committed("a"), 1).unwrap()[0].payload, 50u32.to_be_bytes());
    }

    #[test]
    fn second_writer_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let _q = Queue::open(dir.path(), small()).unwrap();
        assert!(matches!(Queue::open(dir.path(), small()), Err(QueueError::Locked)));
    }

    #[test]
    fn retention_waits_for_cursors() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small();
        cfg.retention_segments = Some(1);
        let mut q = Queue::open(dir.path(), cfg).unwrap();
        q.commit("slow", 0).unwrap();
        for _ in 0..200 {
            q.append(&[1u8; 100]).unwrap();
        }
        assert_eq!(q.segments()[0], 0);
        let head = q.head();
        q.commit("slow", head).unwrap();
        q.apply_retention().unwrap();
        assert_eq!(q.segments().len(), 2);
        assert!(matches!(q.read(0, 1), Err(QueueError::OffsetTrimmed { .. })));
    }

    #[test]
    fn oversized_and_capped_payloads() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small();
        cfg.max_record = 10_000;
        let mut q = Queue::open(dir.path(), cfg).unwrap();
        assert!(matches!(q.append(&[0u8; 10_001]), Err(QueueError::PayloadTooLarge { .. })));
        q.append(b"x").unwrap();
        q.append(&[9u8; 9000]).unwrap();
        q.append(b"y").unwrap();
        let r = q.read(0, 10).unwrap();
        assert_eq!(r[1].payload.len(), 9000);
        assert_eq!(r[2].payload, b"y");
    }

    #[test]
    fn concurrent_reader_sees_published_records() {
        let dir = tempfile::tempdir().unwrap();
        let mut q = Queue::open(dir.path(), small()).unwrap();
        let mut reader = q.reader();
        let t = std::thread::spawn(move || {
            let mut seen = 0u64;
            while seen < 500 {
                for r in reader.read(seen, 64).unwrap() {
                    assert_eq!(r.payload, r.offset.to_be_bytes());
                    seen += 1;
                }
            }
        });
        for i in 0..500u64 {
            q.append(&i.to_be_bytes()).unwrap();
        }
        t.join().unwrap();
    }
}
