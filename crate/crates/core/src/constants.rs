//! Network-wide constants. Every node of a deployment must agree on these;
//! their digest travels in each frame header.

use sha2::{Digest, Sha256};

/// Keyword alphabet. Rank 0 is reserved for padding, so the character at
/// position `i` of this string has rank `i + 1`.
pub const ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz0123456789.-:_";

/// Radix of the positional keyword encoding (alphabet plus the padding rank).
pub const RADIX: u32 = ALPHABET.len() as u32 + 1;

/// Bits needed to hold one positional digit.
pub const DIGIT_BITS: u32 = u32::BITS - (RADIX - 1).leading_zeros();

/// Tag naming the Hilbert orientation convention (Skilling transpose form,
/// axis 0 most significant, curve starting at the origin cell).
pub const ORIENTATION: &str = "skilling-axis0-msb-origin";

/// Width to which all-digit values are zero-padded, so decimal numbers
/// compare in numeric order under the positional encoding.
pub const NUMERIC_WIDTH: usize = 12;

pub const DEFAULT_DIMENSIONS: u32 = 3;
pub const DEFAULT_ORDER: u32 = 16;
pub const DEFAULT_CAPACITY: usize = 16;
pub const DEFAULT_REPLICAS: usize = 3;

/// Largest dimension count supported by the curve.
pub const MAX_DIMENSIONS: u32 = 8;

/// Keyword-space shape shared by the whole network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpaceConfig {
    pub dimensions: u32,
    pub order: u32,
}

impl Default for SpaceConfig {
    fn default() -> Self {
        SpaceConfig {
            dimensions: DEFAULT_DIMENSIONS,
            order: DEFAULT_ORDER,
        }
    }
}

impl SpaceConfig {
    pub fn new(dimensions: u32, order: u32) -> Self {
        SpaceConfig { dimensions, order }
    }

    /// Total number of index bits, `d * b`.
    pub fn index_bits(&self) -> u32 {
        self.dimensions * self.order
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.dimensions == 0 || self.dimensions > MAX_DIMENSIONS {
            return Err(format!(
                "dimensions must be in 1..={MAX_DIMENSIONS}, got {}",
                self.dimensions
            ));
        }
        if self.order == 0 {
            return Err("order must be at least 1".into());
        }
        if self.index_bits() > 128 {
            return Err(format!(
                "d*b = {} exceeds the 128-bit index space",
                self.index_bits()
            ));
        }
        Ok(())
    }

    /// 8-byte digest over `d|b|orientation|alphabet`.
    pub fn digest(&self) -> [u8; 8] {
        let text = format!(
            "{}|{}|{}|{}",
            self.dimensions, self.order, ORIENTATION, ALPHABET
        );
        let full = Sha256::digest(text.as_bytes());
        let mut out = [0u8; 8];
        out.copy_from_slice(&full[..8]);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digit_width_covers_radix() {
        assert_eq!(RADIX, 41);
        assert_eq!(DIGIT_BITS, 6);
        assert!(1u32 << DIGIT_BITS >= RADIX);
        assert!(1u32 << (DIGIT_BITS - 1) < RADIX);
    }

    #[test]
    fn digest_tracks_constants() {
        let a = SpaceConfig::new(3, 16).digest();
        assert_eq!(a, SpaceConfig::new(3, 16).digest());
        assert_ne!(a, SpaceConfig::new(2, 16).digest());
        assert_ne!(a, SpaceConfig::new(3, 12).digest());
    }
}
