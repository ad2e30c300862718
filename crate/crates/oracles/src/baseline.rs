//! Throughput comparison between the mapped queue and a plain file that
//! issues one write per record and flushes it to the kernel each time.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use rpmesh_core::mmq::{Queue, QueueConfig};

/// Same framing as a queue record: size, crc, timestamp, payload.
pub struct FlushPerRecordLog {
    out: BufWriter<File>,
}

impl FlushPerRecordLog {
    pub fn create(path: &Path) -> io::Result<Self> {
        Ok(FlushPerRecordLog {
            out: BufWriter::new(File::create(path)?),
        })
    }

    pub fn append(&mut self, payload: &[u8], ts: u64) -> io::Result<()> {
        let size = (16 + payload.len()) as u32;
        self.out.write_all(&size.to_be_bytes())?;
        self.out.write_all(&crc32fast::hash(payload).to_be_bytes())?;
        self.out.write_all(&ts.to_be_bytes())?;
        self.out.write_all(payload)?;
        self.out.flush()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Throughput {
    pub payload: usize,
    pub records: usize,
    pub mapped_per_sec: f64,
    pub baseline_per_sec: f64,
}

impl Throughput {
    pub fn ratio(&self) -> f64 {
        self.mapped_per_sec / self.baseline_per_sec
    }
}

/// Appends `records` payloads of `payload` bytes through both paths in
/// `dir` and reports records per second. Best of `rounds`.
pub fn compare(dir: &Path, payload: usize, records: usize, rounds: usize) -> io::Result<Throughput> {
    let data = vec![0x5au8; payload];
    let mut best_mapped: f64 = 0.0;
    let mut best_base: f64 = 0.0;
    for round in 0..rounds.max(1) {
        let qdir = dir.join(format!("mapped-{round}"));
        let mut q = Queue::open(
            &qdir,
            QueueConfig {
                segment_size: 64 << 20,
                ..QueueConfig::default()
            },
        )
        .map_err(io::Error::other)?;
        let t = Instant::now();
        for i in 0..records {
            q.append_at(&data, i as u64).map_err(io::Error::other)?;
        }
        let mapped = records as f64 / t.elapsed().as_secs_f64();
        drop(q);
        std::fs::remove_dir_all(&qdir)?;

        let bpath = dir.join(format!("baseline-{round}.log"));
        let mut log = FlushPerRecordLog::create(&bpath)?;
        let t = Instant::now();
        for i in 0..records {
            log.append(&data, i as u64)?;
        }
        let base = records as f64 / t.elapsed().as_secs_f64();
        drop(log);
        std::fs::remove_file(&bpath)?;
        best_mapped = best_mapped.max(mapped);
        best_base = best_base.max(base);
    }
    Ok(Throughput {
        payload,
        records,
        mapped_per_sec: best_mapped,
        baseline_per_sec: best_base,
    })
}
