//! 160-bit identifiers, XOR distance and endpoints.

use std::fmt;

use sha2::{Digest, Sha256};

use crate::constants::SpaceConfig;
use crate::sfc::SfcIndex;

pub const ID_BYTES: usize = 20;
pub const ID_BITS: u32 = 160;

/// Identifier of a rendezvous point, also used for routing keys.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NodeId(pub [u8; ID_BYTES]);

impl NodeId {
    pub const ZERO: NodeId = NodeId([0; ID_BYTES]);

    /// Derives an identifier from the endpoint and a random salt.
    pub fn derive(endpoint: &str, salt: u64) -> NodeId {
        let mut h = Sha256::new();
        h.update(endpoint.as_bytes());
        h.update(salt.to_be_bytes());
        let d = h.finalize();
        let mut out = [0u8; ID_BYTES];
        out.copy_from_slice(&d[..ID_BYTES]);
        NodeId(out)
    }

    pub fn from_slice(b: &[u8]) -> Option<NodeId> {
        <[u8; ID_BYTES]>::try_from(b).ok().map(NodeId)
    }

    pub fn distance(&self, other: &NodeId) -> NodeId {
        let mut out = [0u8; ID_BYTES];
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.0[i] ^ other.0[i];
        }
        NodeId(out)
    }

    /// Bit at `pos`, counted from the most significant bit.
    pub fn bit(&self, pos: u32) -> bool {
        let byte = self.0[(pos / 8) as usize];
        byte >> (7 - pos % 8) & 1 == 1
    }

    pub fn with_bit(mut self, pos: u32, value: bool) -> NodeId {
        let mask = 1u8 << (7 - pos % 8);
        let b = &mut self.0[(pos / 8) as usize];
        if value {
            *b |= mask;
        } else {
            *b &= !mask;
        }
        self
    }

    pub fn leading_zeros(&self) -> u32 {
        let mut n = 0;
        for b in self.0 {
            if b == 0 {
                n += 8;
            } else {
                return n + b.leading_zeros();
            }
        }
        n
    }

    pub fn to_hex(&self) -> String {
        crate::ar::hex(&self.0)
    }

    pub fn short(&self) -> String {
        self.to_hex()[..8].to_string()
    }

    pub fn parse_hex(s: &str) -> Option<NodeId> {
        if s.len() != ID_BYTES * 2 {
            return None;
        }
        let mut out = [0u8; ID_BYTES];
        for (i, o) in out.iter_mut().enumerate() {
            *o = u8::from_str_radix(s.get(2 * i..2 * i + 2)?, 16).ok()?;
        }
        Some(NodeId(out))
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeId({})", self.short())
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Places a curve index in the identifier space by shifting it into the
/// top `d * b` bits.
pub fn scaled_key(index: SfcIndex, space: SpaceConfig) -> NodeId {
    let bits = space.index_bits();
    let mut out = [0u8; ID_BYTES];
    let v = index.0;
    // index bit j (from the top of the d*b field) lands at key bit j
    for j in 0..bits {
        if v >> (bits - 1 - j) & 1 == 1 {
            out[(j / 8) as usize] |= 1 << (7 - j % 8);
        }
    }
    NodeId(out)
}

/// Network address of a node: `host:port` for daemons, `sim:<n>` in
/// simulation.
pub type Endpoint = String;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xor_metric_basics() {
        let a = NodeId::derive("a", 1);
        let b = NodeId::derive("b", 1);
        assert_eq!(a.distance(&a), NodeId::ZERO);
        assert_eq!(a.distance(&b), b.distance(&a));
        assert_ne!(a, NodeId::derive("a", 2));
    }

    #[test]
    fn scaled_key_shifts_into_top_bits() {
        let space = SpaceConfig::new(2, 4);
        let k = scaled_key(SfcIndex(0b1000_0001), space);
        assert_eq!(k.0[0], 0b1000_0001);
        assert!(k.0[1..].iter().all(|&b| b == 0));
        let space = SpaceConfig::new(3, 4);
        let k = scaled_key(SfcIndex((1 << 12) - 1), space);
        assert_eq!(k.0[0], 0xff);
        assert_eq!(k.0[1], 0xf0);
    }

    #[test]
    fn bits_and_hex() {
        let mut id = NodeId::ZERO;
        id = id.with_bit(0, true).with_bit(159, true);
        assert!(id.bit(0) && id.bit(159) && !id.bit(1));
        assert_eq!(id.leading_zeros(), 0);
        assert_eq!(NodeId::ZERO.with_bit(9, true).leading_zeros(), 9);
        assert_eq!(NodeId::parse_hex(&id.to_hex()), Some(id));
    }
}
