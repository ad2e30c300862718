//! Field-tagged payload encoding: tag u8, length u16, bytes. A length of
//! 0xFFFF is followed by a u32 length for fields of 64 KiB and above.

use super::WireError;
use crate::id::NodeId;

const LONG: u16 = 0xFFFF;

#[derive(Debug, Default, Clone)]
pub struct TlvWriter {
    buf: Vec<u8>,
}

impl TlvWriter {
    pub fn new() -> Self {
        TlvWriter::default()
    }

    pub fn bytes(&mut self, tag: u8, value: &[u8]) -> &mut Self {
        self.buf.push(tag);
        if value.len() < LONG as usize {
            self.buf.extend_from_slice(&(value.len() as u16).to_be_bytes());
        } else {
            self.buf.extend_from_slice(&LONG.to_be_bytes());
            self.buf.extend_from_slice(&(value.len() as u32).to_be_bytes());
        }
        self.buf.extend_from_slice(value);
        self
    }

    pub fn u8(&mut self, tag: u8, v: u8) -> &mut Self {
        self.bytes(tag, &[v])
    }

    pub fn u32(&mut self, tag: u8, v: u32) -> &mut Self {
        self.bytes(tag, &v.to_be_bytes())
    }

    pub fn u64(&mut self, tag: u8, v: u64) -> &mut Self {
        self.bytes(tag, &v.to_be_bytes())
    }

    pub fn f64(&mut self, tag: u8, v: f64) -> &mut Self {
        self.bytes(tag, &v.to_bits().to_be_bytes())
    }

    pub fn str(&mut self, tag: u8, v: &str) -> &mut Self {
        self.bytes(tag, v.as_bytes())
    }

    pub fn id(&mut self, tag: u8, v: &NodeId) -> &mut Self {
        self.bytes(tag, &v.0)
    }

    pub fn nested(&mut self, tag: u8, inner: &TlvWriter) -> &mut Self {
        self.bytes(tag, &inner.buf)
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Parsed fields of one payload, in order; repeated tags are kept.
#[derive(Debug, Clone)]
pub struct Fields<'a> {
    items: Vec<(u8, &'a [u8])>,
}

impl<'a> Fields<'a> {
    pub fn parse(mut buf: &'a [u8]) -> Result<Self, WireError> {
        let mut items = Vec::new();
        while !buf.is_empty() {
            if buf.len() < 3 {
                return Err(WireError::Truncated);
            }
            let tag = buf[0];
            let short = u16::from_be_bytes([buf[1], buf[2]]);
            buf = &buf[3..];
            let len = if short == LONG {
                if buf.len() < 4 {
                    return Err(WireError::Truncated);
                }
                let l = u32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]) as usize;
                buf = &buf[4..];
                l
            } else {
                short as usize
            };
            if buf.len() < len {
                return Err(WireError::Truncated);
            }
            items.push((tag, &buf[..len]));
            buf = &buf[len..];
        }
        Ok(Fields { items })
    }

    pub fn get(&self, tag: u8) -> Option<&'a [u8]> {
        self.items.iter().find(|(t, _)| *t == tag).map(|(_, v)| *v)
    }

    pub fn all(&self, tag: u8) -> impl Iterator<Item = &'a [u8]> + '_ {
        self.items
            .iter()
            .filter(move |(t, _)| *t == tag)
            .map(|(_, v)| *v)
    }

    pub fn req(&self, tag: u8) -> Result<&'a [u8], WireError> {
        self.get(tag).ok_or(WireError::MissingField(tag))
    }

    fn fixed<const N: usize>(&self, tag: u8) -> Result<[u8; N], WireError> {
        <[u8; N]>::try_from(self.req(tag)?).map_err(|_| WireError::BadField {
            tag,
            reason: format!("expected {N} bytes"),
        })
    }

    pub fn u8(&self, tag: u8) -> Result<u8, WireError> {
        Ok(self.fixed::<1>(tag)?[0])
    }

    pub fn u32(&self, tag: u8) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.fixed(tag)?))
    }

    pub fn u64(&self, tag: u8) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.fixed(tag)?))
    }

    pub fn f64(&self, tag: u8) -> Result<f64, WireError> {
        Ok(f64::from_bits(u64::from_be_bytes(self.fixed(tag)?)))
    }

    pub fn str(&self, tag: u8) -> Result<&'a str, WireError> {
        std::str::from_utf8(self.req(tag)?).map_err(|_| WireError::BadField {
            tag,
            reason: "not utf-8".into(),
        })
    }

    pub fn id(&self, tag: u8) -> Result<NodeId, WireError> {
        Ok(NodeId(self.fixed(tag)?))
    }

    pub fn opt_u64(&self, tag: u8) -> Result<Option<u64>, WireError> {
        self.get(tag).map(|_| self.u64(tag)).transpose()
    }

    pub fn opt_str(&self, tag: u8) -> Result<Option<&'a str>, WireError> {
        self.get(tag).map(|_| self.str(tag)).transpose()
    }

    pub fn opt_id(&self, tag: u8) -> Result<Option<NodeId>, WireError> {
        self.get(tag).map(|_| self.id(tag)).transpose()
    }

    pub fn flag(&self, tag: u8) -> bool {
        self.get(tag).is_some_and(|v| v.first() == Some(&1))
    }
}
