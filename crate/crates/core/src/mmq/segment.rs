//! Segment file layout.
//!
//! Header (16 bytes): magic `RPMQ`, version u8, three zero bytes, base
//! offset u64. Records follow back to back: u32 record size (header plus
//! payload, never zero), u32 crc32 of the payload, u64 timestamp in ms,
//! payload. Unused space is zero, so a zero size word marks the end.

pub const MAGIC: [u8; 4] = *b"RPMQ";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 16;
pub const RECORD_HEADER: usize = 16;

pub fn file_name(base: u64) -> String {
    format!("segment-{base:020}.log")
}

pub fn parse_file_name(name: &str) -> Option<u64> {
    let digits = name.strip_prefix("segment-")?.strip_suffix(".log")?;
    (digits.len() == 20).then(|| digits.parse().ok()).flatten()
}

pub fn write_header(buf: &mut [u8], base: u64) {
    buf[..4].copy_from_slice(&MAGIC);
    buf[4] = VERSION;
    buf[5..8].fill(0);
    buf[8..16].copy_from_slice(&base.to_be_bytes());
}

/// Base offset stored in a header, if the header is well formed.
pub fn read_header(buf: &[u8]) -> Option<u64> {
    if buf.len() < HEADER_LEN || buf[..4] != MAGIC || buf[4] != VERSION {
        return None;
    }
    Some(u64::from_be_bytes(buf[8..16].try_into().ok()?))
}

pub fn record_size(payload_len: usize) -> usize {
    RECORD_HEADER + payload_len
}

/// Writes a record at `at`; the size word goes in last so a partial write
/// leaves an end marker behind.
pub fn write_record(buf: &mut [u8], at: usize, ts: u64, payload: &[u8]) {
    let size = record_size(payload.len());
    buf[at + 4..at + 8].copy_from_slice(&crc32fast::hash(payload).to_be_bytes());
    buf[at + 8..at + 16].copy_from_slice(&ts.to_be_bytes());
    buf[at + 16..at + size].copy_from_slice(payload);
    buf[at..at + 4].copy_from_slice(&(size as u32).to_be_bytes());
}

#[derive(Debug, PartialEq, Eq)]
pub enum Parsed<'a> {
    Record {
        size: usize,
        crc: u32,
        timestamp: u64,
        payload: &'a [u8],
    },
    End,
    /// Framing runs past the buffer or the checksum fails.
    Invalid,
}

pub fn parse_record(buf: &[u8], at: usize) -> Parsed<'_> {
    if at + 4 > buf.len() {
        return Parsed::End;
    }
    let size = u32::from_be_bytes(buf[at..at + 4].try_into().unwrap()) as usize;
    if size == 0 {
        return Parsed::End;
    }
    if size < RECORD_HEADER || at + size > buf.len() {
        return Parsed::Invalid;
    }
    let crc = u32::from_be_bytes(buf[at + 4..at + 8].try_into().unwrap());
    let timestamp = u64::from_be_bytes(buf[at + 8..at + 16].try_into().unwrap());
    let payload = &buf[at + 16..at + size];
    if crc32fast::hash(payload) != crc {
        return Parsed::Invalid;
    }
    Parsed::Record {
        size,
        crc,
        timestamp,
        payload,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        assert_eq!(file_name(42), "segment-00000000000000000042.log");
        assert_eq!(parse_file_name(&file_name(42)), Some(42));
        assert_eq!(parse_file_name("segment-1.log"), None);
    }

    #[test]
    fn record_framing() {
        let mut buf = vec![0u8; 64];
        write_header(&mut buf, 7);
        assert_eq!(read_header(&buf), Some(7));
        write_record(&mut buf, 16, 99, b"abc");
        match parse_record(&buf, 16) {
            Parsed::Record { size, timestamp, payload, .. } => {
                assert_eq!((size, timestamp, payload), (19, 99, &b"abc"[..]));
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(parse_record(&buf, 35), Parsed::End);
        buf[33] ^= 1;
        assert_eq!(parse_record(&buf, 16), Parsed::Invalid);
    }
}
