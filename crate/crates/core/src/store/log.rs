//! Cold tier: an append-only log of checksummed records.
//!
//! Record framing: u32 payload length, u32 crc32 of the payload, payload.
//! Positions handed out are byte offsets of the record start.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

const FRAME: u64 = 8;

/// Read side of a log generation; cheap to clone and safe to keep after the
/// log has been compacted.
#[derive(Clone)]
pub enum LogReader {
    File(Arc<File>),
    Mem(Arc<RwLock<Vec<u8>>>),
}

impl LogReader {
    fn read_exact_at(&self, buf: &mut [u8], pos: u64) -> io::Result<()> {
        match self {
            LogReader::File(f) => f.read_exact_at(buf, pos),
            LogReader::Mem(m) => {
                let m = m.read().map_err(|_| io::Error::other("poisoned"))?;
                let start = pos as usize;
                let src = m
                    .get(start..start + buf.len())
                    .ok_or_else(|| io::Error::from(io::ErrorKind::UnexpectedEof))?;
                buf.copy_from_slice(src);
                Ok(())
            }
        }
    }

    /// Payload of the record at `pos`, verified against its checksum.
    pub fn read(&self, pos: u64) -> io::Result<Vec<u8>> {
        let mut head = [0u8; FRAME as usize];
        self.read_exact_at(&mut head, pos)?;
        let len = u32::from_be_bytes(head[..4].try_into().unwrap()) as usize;
        let crc = u32::from_be_bytes(head[4..].try_into().unwrap());
        let mut payload = vec![0u8; len];
        self.read_exact_at(&mut payload, pos + FRAME)?;
        if crc32fast::hash(&payload) != crc {
            return Err(io::Error::new(io::ErrorKind::InvalidData, "record checksum mismatch"));
        }
        Ok(payload)
    }
}

enum Backend {
    File { path: PathBuf, file: Arc<File> },
    Mem(Arc<RwLock<Vec<u8>>>),
}

pub struct ColdLog {
    backend: Backend,
    len: u64,
}

fn encode_record(payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(payload.len() + FRAME as usize);
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(&crc32fast::hash(payload).to_be_bytes());
    out.extend_from_slice(payload);
    out
}

/// Splits a byte image into valid records; returns them with their
/// positions and the length of the valid prefix.
fn scan(bytes: &[u8]) -> (Vec<(u64, Vec<u8>)>, u64) {
    let mut out = Vec::new();
    let mut pos = 0usize;
    while bytes.len() - pos >= FRAME as usize {
        let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
        let crc = u32::from_be_bytes(bytes[pos + 4..pos + 8].try_into().unwrap());
        let end = pos + FRAME as usize + len;
        if end > bytes.len() {
            break;
        }
        let payload = &bytes[pos + FRAME as usize..end];
        if crc32fast::hash(payload) != crc {
            break;
        }
        out.push((pos as u64, payload.to_vec()));
        pos = end;
    }
    (out, pos as u64)
}

impl ColdLog {
    pub fn in_memory() -> Self {
        ColdLog {
            backend: Backend::Mem(Arc::new(RwLock::new(Vec::new()))),
            len: 0,
        }
    }

    /// Opens or creates the log file, dropping any torn tail. Returns the
    /// surviving records in order.
    pub fn open(path: &Path) -> io::Result<(ColdLog, Vec<(u64, Vec<u8>)>)> {
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e),
        };
        let (records, valid) = scan(&bytes);
        let file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(path)?;
        if valid < bytes.len() as u64 {
            file.set_len(valid)?;
        }
        Ok((
            ColdLog {
                backend: Backend::File {
                    path: path.to_path_buf(),
                    file: Arc::new(file),
                },
                len: valid,
            },
            records,
        ))
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn append(&mut self, payload: &[u8]) -> io::Result<u64> {
        let rec = encode_record(payload);
        let pos = self.len;
        match &mut self.backend {
            Backend::File { file, .. } => (&**file).write_all(&rec)?,
            Backend::Mem(m) => m
                .write()
                .map_err(|_| io::Error::other("poisoned"))?
                .extend_from_slice(&rec),
        }
        self.len += rec.len() as u64;
        Ok(pos)
    }

    pub fn reader(&self) -> LogReader {
        match &self.backend {
            Backend::File { file, .. } => LogReader::File(file.clone()),
            Backend::Mem(m) => LogReader::Mem(m.clone()),
        }
    }

    pub fn sync(&self) -> io::Result<()> {
        match &self.backend {
            Backend::File { file, .. } => file.sync_data(),
            Backend::Mem(_) => Ok(()),
        }
    }

    /// Replaces the log with the given payloads, atomically for files.
    /// Returns the new position of each payload.
    pub fn rewrite(&mut self, payloads: &[Vec<u8>]) -> io::Result<Vec<u64>> {
        let mut image = Vec::new();
        let mut positions = Vec::with_capacity(payloads.len());
        for p in payloads {
            positions.push(image.len() as u64);
            image.extend_from_slice(&encode_record(p));
        }
        match &mut self.backend {
            Backend::File { path, file } => {
                let tmp = path.with_extension("compact");
                {
                    let mut f = File::create(&tmp)?;
                    f.write_all(&image)?;
                    f.sync_data()?;
                }
                fs::rename(&tmp, &*path)?;
                *file = Arc::new(OpenOptions::new().read(true).append(true).open(&*path)?);
            }
            Backend::Mem(m) => *m = Arc::new(RwLock::new(image.clone())),
        }
        self.len = image.len() as u64;
        Ok(positions)
    }
}
