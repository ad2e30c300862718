//! Kill-point fault injection for the queue. A child process appends and
//! aborts without flushing or unmapping; the parent optionally tears the
//! tail and checks what recovery brings back.

use std::fs::{self, OpenOptions};
use std::path::{Path, PathBuf};
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rpmesh_core::mmq::{segment, Queue, QueueConfig};

const DIR: &str = "RPMQ_CHILD_DIR";
const FROM: &str = "RPMQ_CHILD_FROM";
const COUNT: &str = "RPMQ_CHILD_COUNT";

pub fn queue_config() -> QueueConfig {
    QueueConfig {
        segment_size: 8192,
        ..QueueConfig::default()
    }
}

/// Deterministic, never-zero payload for an offset.
pub fn payload(offset: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(offset ^ 0xA5A5);
    let len = rng.random_range(1..700);
    (0..len).map(|_| rng.random_range(1..=255u8)).collect()
}

pub fn is_child() -> bool {
    std::env::var_os(DIR).is_some()
}

/// In a spawned child: appends the requested records and aborts right
/// after the last append returns. Returns at once in any other process.
pub fn child_if_requested() {
    let Ok(dir) = std::env::var(DIR) else { return };
    let from: u64 = std::env::var(FROM).expect("from").parse().expect("from");
    let count: u64 = std::env::var(COUNT).expect("count").parse().expect("count");
    let mut q = Queue::open(Path::new(&dir), queue_config()).expect("child opens queue");
    assert_eq!(q.head(), from);
    for off in from..from + count {
        assert_eq!(q.append_at(&payload(off), off).expect("append"), off);
    }
    std::process::abort();
}

fn run_child(dir: &Path, from: u64, count: u64, child_args: &[&str]) -> Result<(), String> {
    let exe = std::env::current_exe().map_err(|e| e.to_string())?;
    let out = Command::new(exe)
        .args(child_args)
        .env(DIR, dir)
        .env(FROM, from.to_string())
        .env(COUNT, count.to_string())
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        return Err("child exited normally instead of aborting".into());
    }
    Ok(())
}

fn active_segment(dir: &Path) -> Result<(u64, PathBuf), String> {
    let mut bases: Vec<u64> = fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok())
        .filter_map(|e| segment::parse_file_name(&e.file_name().to_string_lossy()))
        .collect();
    bases.sort();
    let b = *bases.last().ok_or("no segments")?;
    Ok((b, dir.join(segment::file_name(b))))
}

/// Damages the last record of the active segment: `mode` 1 truncates it,
/// 2 flips one of its bytes. Returns whether a record was damaged.
fn tear(dir: &Path, head: u64, mode: u32, rng: &mut ChaCha8Rng) -> Result<bool, String> {
    let (base, path) = active_segment(dir)?;
    if base == head || mode == 0 {
        return Ok(false);
    }
    let bytes = fs::read(&path).map_err(|e| e.to_string())?;
    let end = bytes.iter().rposition(|b| *b != 0).ok_or("empty segment")? + 1;
    let last_len = payload(head - 1).len();
    let cut = rng.random_range(0..last_len.min(64)) + 1;
    if mode == 1 {
        let f = OpenOptions::new().write(true).open(&path).map_err(|e| e.to_string())?;
        f.set_len((end - cut) as u64).map_err(|e| e.to_string())?;
    } else {
        let mut b = bytes;
        b[end - cut] ^= 0x5a;
        fs::write(&path, b).map_err(|e| e.to_string())?;
    }
    Ok(true)
}

/// Reopens the queue and checks that exactly `expect` records come back,
/// each with its original payload and a valid crc.
fn verify(dir: &Path, expect: u64) -> Result<Queue, String> {
    let mut q = Queue::open(dir, queue_config()).map_err(|e| e.to_string())?;
    if q.head() != expect {
        return Err(format!("head {} after recovery, expected {expect}", q.head()));
    }
    let mut at = 0;
    while at < expect {
        let batch = q.read(at, 500).map_err(|e| e.to_string())?;
        if batch.is_empty() {
            return Err(format!("read stopped at {at} of {expect}"));
        }
        for r in batch {
            if r.offset != at || r.payload != payload(at) {
                return Err(format!("record {at} came back wrong"));
            }
            if r.crc != crc32fast::hash(&r.payload) {
                return Err(format!("record {at} surfaced with a bad crc"));
            }
            at += 1;
        }
    }
    if !q.read(expect, 10).map_err(|e| e.to_string())?.is_empty() {
        return Err(format!("records surfaced past head {expect}"));
    }
    Ok(q)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FaultReport {
    pub runs: usize,
    pub kills: usize,
    pub torn: usize,
    pub recovered: u64,
}

/// `runs` independent queues, each killed twice at random points. The
/// child is the current executable run with `child_args`; it must call
/// [`child_if_requested`] early.
pub fn kill_point_runs(runs: usize, seed: u64, child_args: &[&str]) -> Result<FaultReport, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = FaultReport {
        runs,
        ..FaultReport::default()
    };
    for run in 0..runs {
        let tmp = std::env::temp_dir().join(format!("rpmq-faults-{}-{seed}-{run}", std::process::id()));
        let _ = fs::remove_dir_all(&tmp);
        fs::create_dir_all(&tmp).map_err(|e| e.to_string())?;
        let dir = tmp.as_path();
        let mut head = 0u64;
        let result = (|| {
            for _generation in 0..2 {
                let k = rng.random_range(1..120);
                run_child(dir, head, k, child_args)?;
                report.kills += 1;
                head += k;
                let mode = rng.random_range(0..3);
                if tear(dir, head, mode, &mut rng)? {
                    head -= 1;
                    report.torn += 1;
                }
                drop(verify(dir, head)?);
            }
            // the recovered queue keeps working
            let mut q = Queue::open(dir, queue_config()).map_err(|e| e.to_string())?;
            let off = q.append_at(&payload(head), head).map_err(|e| e.to_string())?;
            if off != head {
                return Err(format!("append after recovery landed at {off}, expected {head}"));
            }
            q.flush().map_err(|e| e.to_string())?;
            drop(q);
            drop(verify(dir, head + 1)?);
            Ok(())
        })();
        let _ = fs::remove_dir_all(&tmp);
        result.map_err(|e: String| format!("run {run}: {e}"))?;
        report.recovered += head + 1;
    }
    Ok(report)
}
