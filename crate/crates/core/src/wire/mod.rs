//! Length-prefixed binary frames shared by the daemon transport and the
//! simulator.
//!
//! Header: magic `RPLS`, version u8, constants digest (8 bytes), frame type
//! u8, payload length u32 big-endian. The payload is a list of tagged
//! fields (see [`tlv`]).

pub mod codec;
pub mod tlv;

use thiserror::Error;

pub use tlv::{Fields, TlvWriter};

pub const MAGIC: [u8; 4] = *b"RPLS";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 18;
/// Largest payload accepted on the wire.
pub const MAX_PAYLOAD: usize = 64 << 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("frame truncated")]
    Truncated,
    #[error("bad frame magic")]
    BadMagic,
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
    #[error("incompatible network: constants digest {theirs} differs from ours {ours}")]
    IncompatibleNetwork { ours: String, theirs: String },
    #[error("unknown frame type {0}")]
    UnknownFrame(u8),
    #[error("payload of {0} bytes exceeds the frame limit")]
    PayloadTooLarge(usize),
    #[error("missing field {0}")]
    MissingField(u8),
    #[error("bad field {tag}: {reason}")]
    BadField { tag: u8, reason: String },
}

macro_rules! frame_types {
    ($($name:ident = $code:expr => $text:expr),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum FrameType { $($name),* }

        impl FrameType {
            pub const ALL: &'static [FrameType] = &[$(FrameType::$name),*];

            pub fn code(self) -> u8 {
                match self { $(FrameType::$name => $code),* }
            }

            pub fn from_code(c: u8) -> Option<FrameType> {
                match c { $($code => Some(FrameType::$name),)* _ => None }
            }

            pub fn name(self) -> &'static str {
                match self { $(FrameType::$name => $text),* }
            }
        }
    };
}

frame_types! {
    Join = 1 => "JOIN",
    JoinAck = 2 => "JOIN_ACK",
    Ping = 3 => "PING",
    Pong = 4 => "PONG",
    Lookup = 5 => "LOOKUP",
    LookupAck = 6 => "LOOKUP_ACK",
    ElectProbe = 7 => "ELECT_PROBE",
    ElectReply = 8 => "ELECT_REPLY",
    ElectWin = 9 => "ELECT_WIN",
    Snapshot = 10 => "SNAPSHOT",
    Forward = 11 => "FORWARD",
    Store = 12 => "STORE",
    StoreAck = 13 => "STORE_ACK",
    Push = 14 => "PUSH",
    Pull = 15 => "PULL",
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub kind: FrameType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(kind: FrameType, payload: Vec<u8>) -> Self {
        Frame { kind, payload }
    }

    pub fn encode(&self, digest: &[u8; 8]) -> Result<Vec<u8>, WireError> {
        if self.payload.len() > MAX_PAYLOAD {
            return Err(WireError::PayloadTooLarge(self.payload.len()));
        }
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.extend_from_slice(digest);
        out.push(self.kind.code());
        out.extend_from_slice(&(self.payload.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    /// Total frame length announced by a header prefix, once at least
    /// `HEADER_LEN` bytes are available.
    pub fn peek_len(buf: &[u8]) -> Result<Option<usize>, WireError> {
        if buf.len() < HEADER_LEN {
            return Ok(None);
        }
        if buf[..4] != MAGIC {
            return Err(WireError::BadMagic);
        }
        let len = u32::from_be_bytes([buf[14], buf[15], buf[16], buf[17]]) as usize;
        if len > MAX_PAYLOAD {
            return Err(WireError::PayloadTooLarge(len));
        }
        Ok(Some(HEADER_LEN + len))
    }

    /// Decodes one complete frame, rejecting peers with other constants.
    pub fn decode(buf: &[u8], digest: &[u8; 8]) -> Result<Frame, WireError> {
        let total = Frame::peek_len(buf)?.ok_or(WireError::Truncated)?;
        if buf.len() < total {
            return Err(WireError::Truncated);
        }
        if buf[4] != VERSION {
            return Err(WireError::UnsupportedVersion(buf[4]));
        }
        if &buf[5..13] != digest {
            return Err(WireError::IncompatibleNetwork {
                ours: crate::ar::hex(digest),
                theirs: crate::ar::hex(&buf[5..13]),
            });
        }
        let kind = FrameType::from_code(buf[13]).ok_or(WireError::UnknownFrame(buf[13]))?;
        Ok(Frame {
            kind,
            payload: buf[HEADER_LEN..total].to_vec(),
        })
    }

    /// Frame type of an encoded frame without validating the rest.
    pub fn peek_kind(buf: &[u8]) -> Option<FrameType> {
        buf.get(13).and_then(|&c| FrameType::from_code(c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_round_trip_and_digest_check() {
        let d = [1u8; 8];
        for &kind in FrameType::ALL {
            let f = Frame::new(kind, vec![1, 2, 3]);
            let bytes = f.encode(&d).unwrap();
            assert_eq!(Frame::peek_len(&bytes).unwrap(), Some(bytes.len()));
            assert_eq!(Frame::decode(&bytes, &d).unwrap(), f);
            assert_eq!(Frame::peek_kind(&bytes), Some(kind));
        }
        let bytes = Frame::new(FrameType::Join, vec![]).encode(&d).unwrap();
        assert!(matches!(
            Frame::decode(&bytes, &[2u8; 8]),
            Err(WireError::IncompatibleNetwork { .. })
        ));
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(Frame::decode(&bad, &d), Err(WireError::BadMagic));
        assert_eq!(Frame::peek_len(&bytes[..5]).unwrap(), None);
    }
}
