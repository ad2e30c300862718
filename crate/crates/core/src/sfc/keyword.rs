use std::cmp::Ordering;

use crate::constants::{ALPHABET, DIGIT_BITS, RADIX};

use super::SfcError;

/// Closed interval of coordinates on one keyword axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AxisInterval {
    pub lo: u64,
    pub hi: u64,
}

impl AxisInterval {
    pub fn point(v: u64) -> Self {
        AxisInterval { lo: v, hi: v }
    }

    pub fn contains(&self, v: u64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }
}

/// Rank of a (case-folded) character; 0 is the padding rank.
pub fn char_rank(c: char) -> Option<u32> {
    let c = c.to_ascii_lowercase();
    ALPHABET.find(c).map(|i| i as u32 + 1)
}

pub fn is_keyword_char(c: char) -> bool {
    char_rank(c).is_some()
}

/// Number of characters that fit in one coordinate of `order` bits.
pub fn chars_per_axis(order: u32) -> usize {
    (order / DIGIT_BITS) as usize
}

/// Compares two keyword strings in positional order: rank by rank, a
/// proper prefix sorting first. Characters outside the alphabet sort last.
pub fn positional_cmp(a: &str, b: &str) -> Ordering {
    let key = |c: char| char_rank(c).unwrap_or(u32::MAX);
    a.chars().map(key).cmp(b.chars().map(key))
}

fn axis_max(order: u32) -> u64 {
    if order >= 64 {
        u64::MAX
    } else {
        (1u64 << order) - 1
    }
}

fn digits_value(ranks: &[u32], width: usize, fill: u32) -> u64 {
    let mut v: u64 = 0;
    for i in 0..width {
        let r = ranks.get(i).copied().unwrap_or(fill);
        v = v * RADIX as u64 + r as u64;
    }
    v
}

/// Maps a keyword (optionally ending in `*`) to its interval on an axis of
/// `order` bits. Exact keywords give a degenerate interval, a prefix gives
/// every coordinate whose digit expansion starts with it, and a bare `*`
/// spans the whole axis.
pub fn encode_keyword(term: &str, order: u32) -> Result<AxisInterval, SfcError> {
    if term.is_empty() {
        return Err(SfcError::InvalidKeyword(term.to_string()));
    }
    if term == "*" {
        return Ok(AxisInterval {
            lo: 0,
            hi: axis_max(order),
        });
    }
    let (body, partial) = match term.strip_suffix('*') {
        Some(body) => (body, true),
        None => (term, false),
    };
    let mut ranks = Vec::with_capacity(body.len());
    for c in body.chars() {
        match char_rank(c) {
            Some(r) => ranks.push(r),
            None => return Err(SfcError::InvalidKeyword(term.to_string())),
        }
    }
    let width = chars_per_axis(order);
    let lo = digits_value(&ranks, width, 0);
    if !partial || ranks.len() >= width {
        return Ok(AxisInterval::point(lo));
    }
    let hi = digits_value(&ranks, width, RADIX - 1);
    Ok(AxisInterval { lo, hi })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bare_wildcard_spans_axis() {
        assert_eq!(
            encode_keyword("*", 16).unwrap(),
            AxisInterval { lo: 0, hi: 65535 }
        );
    }

    #[test]
    fn exact_terms_are_deterministic_points() {
        let a = encode_keyword("drone", 16).unwrap();
        let b = encode_keyword("drone", 16).unwrap();
        assert!(a.is_point());
        assert_eq!(a, b);
        assert_eq!(encode_keyword("DRONE", 16).unwrap(), a);
    }

    #[test]
    fn rejects_bad_characters_and_inner_star() {
        assert!(matches!(
            encode_keyword("dr one", 16),
            Err(SfcError::InvalidKeyword(_))
        ));
        assert!(matches!(
            encode_keyword("li*ar", 16),
            Err(SfcError::InvalidKeyword(_))
        ));
        assert!(encode_keyword("", 16).is_err());
    }

    #[test]
    fn prefix_encloses_completions() {
        let li = encode_keyword("li*", 16).unwrap();
        let lidar = encode_keyword("lidar", 16).unwrap();
        assert!(li.lo <= lidar.lo && lidar.lo <= li.hi);
    }

    // Exhaustive over every 3-character string: exactly the "li" ones land
    // inside the "li*" interval. Uses 18 bits so all three characters count.
    #[test]
    fn prefix_interval_is_exact_over_three_char_strings() {
        let order = 18;
        let li = encode_keyword("li*", order).unwrap();
        let chars: Vec<char> = ALPHABET.chars().collect();
        for a in &chars {
            for b in &chars {
                for c in &chars {
                    let s: String = [*a, *b, *c].iter().collect();
                    let v = encode_keyword(&s, order).unwrap().lo;
                    assert_eq!(li.contains(v), s.starts_with("li"), "{s}");
                }
            }
        }
    }

    #[test]
    fn values_fit_the_axis() {
        for order in [6, 12, 16, 30, 64] {
            let iv = encode_keyword("____________________", order).unwrap();
            assert!(order >= 64 || iv.hi < (1u64 << order));
        }
    }

    #[test]
    fn positional_order_follows_alphabet_rank() {
        assert_eq!(positional_cmp("a", "b"), Ordering::Less);
        assert_eq!(positional_cmp("z", "0"), Ordering::Less);
        assert_eq!(positional_cmp("9", "."), Ordering::Less);
        assert_eq!(positional_cmp("ab", "abc"), Ordering::Less);
        assert_eq!(positional_cmp("Ab", "ab"), Ordering::Equal);
    }
}
