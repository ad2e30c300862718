//! Which ring members are responsible for a key, a curve block or a whole
//! keyword-space target.
//!
//! A member is responsible for an index when it is among the `r` members
//! XOR-closest to the scaled key. For regions the responsible set is the
//! union over every cell; it is computed exactly by walking the members as
//! a binary trie against aligned curve blocks instead of enumerating cells.

use std::collections::BTreeSet;

use crate::constants::SpaceConfig;
use crate::id::{scaled_key, NodeId, ID_BITS};
use crate::sfc::{decompose_region, Block, SfcIndex, Target};

/// The `r` members closest to `key`, closest first.
pub fn closest_members(members: &[NodeId], key: &NodeId, r: usize) -> Vec<NodeId> {
    let mut v = members.to_vec();
    v.sort_by_key(|m| m.distance(key));
    v.dedup();
    v.truncate(r);
    v
}

/// Members responsible for a single curve index.
pub fn responsible_for_index(
    members: &[NodeId],
    index: SfcIndex,
    space: SpaceConfig,
    r: usize,
) -> Vec<NodeId> {
    closest_members(members, &scaled_key(index, space), r)
}

/// A set of keys sharing fixed bits everywhere except one contiguous run
/// of free positions.
#[derive(Debug, Clone, Copy)]
struct KeyBlock {
    fixed: NodeId,
    free_lo: u32,
    free_hi: u32,
}

impl KeyBlock {
    fn from_block(block: &Block, space: SpaceConfig) -> KeyBlock {
        let d = space.index_bits();
        KeyBlock {
            fixed: scaled_key(SfcIndex(block.base), space),
            free_lo: d - block.bits,
            free_hi: d,
        }
    }

    fn is_free(&self, pos: u32) -> bool {
        pos >= self.free_lo && pos < self.free_hi
    }
}

/// Union over every key in `block` of the `r` closest members in `cands`.
/// `cands` is sorted ascending and shares all bits above `pos`.
fn union_closest(cands: &[NodeId], r: usize, block: &KeyBlock, pos: u32, out: &mut BTreeSet<NodeId>) {
    if r == 0 || cands.is_empty() {
        return;
    }
    if cands.len() <= r {
        out.extend(cands.iter().copied());
        return;
    }
    if pos >= ID_BITS {
        // unreachable with distinct ids: they differ somewhere
        out.extend(cands.iter().copied());
        return;
    }
    let split = cands.partition_point(|c| !c.bit(pos));
    let (zeros, ones) = cands.split_at(split);
    let side = |key_bit: bool, out: &mut BTreeSet<NodeId>| {
        let (same, other) = if key_bit { (ones, zeros) } else { (zeros, ones) };
        if same.len() >= r {
            union_closest(same, r, block, pos + 1, out);
        } else {
            out.extend(same.iter().copied());
            union_closest(other, r - same.len(), block, pos + 1, out);
        }
    };
    if block.is_free(pos) {
        side(false, out);
        side(true, out);
    } else {
        side(block.fixed.bit(pos), out);
    }
}

/// Exact responsible set for a keyword-space target: every member that is
/// among the `r` closest to the key of at least one cell.
pub fn responsible_for_target(
    members: &[NodeId],
    target: &Target,
    space: SpaceConfig,
    r: usize,
) -> BTreeSet<NodeId> {
    let mut sorted = members.to_vec();
    sorted.sort();
    sorted.dedup();
    let mut out = BTreeSet::new();
    if let Target::Point(p) = target {
        let idx = crate::sfc::hilbert_encode(p);
        out.extend(responsible_for_index(&sorted, idx, space, r));
        return out;
    }
    if sorted.len() <= r {
        out.extend(sorted);
        return out;
    }
    let region = target.region();
    decompose_region(&region, |block| {
        let kb = KeyBlock::from_block(&block, space);
        let mut here = BTreeSet::new();
        union_closest(&sorted, r, &kb, 0, &mut here);
        if here.is_subset(&out) {
            return false;
        }
        if block.inside {
            out.extend(here);
            return false;
        }
        true
    });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ar::Profile;
    use crate::sfc::{hilbert_encode, profile_to_target};

    fn members(n: usize) -> Vec<NodeId> {
        (0..n).map(|i| NodeId::derive("m", i as u64)).collect()
    }

    fn brute(members: &[NodeId], target: &Target, space: SpaceConfig, r: usize) -> BTreeSet<NodeId> {
        let region = target.region();
        let mut out = BTreeSet::new();
        let side = 1u64 << space.order;
        let dims = space.dimensions as usize;
        let total = side.pow(dims as u32);
        for cell in 0..total {
            let mut c = cell;
            let coords: Vec<u64> = (0..dims)
                .map(|_| {
                    let v = c % side;
                    c /= side;
                    v
                })
                .collect();
            if !region.contains(&coords) {
                continue;
            }
            let p = crate::sfc::KeywordSpacePoint::new(coords, space.order).unwrap();
            out.extend(responsible_for_index(members, hilbert_encode(&p), space, r));
        }
        out
    }

    #[test]
    fn matches_cell_enumeration() {
        let space = SpaceConfig::new(2, 6);
        let ms = members(20);
        for text in ["", "a*", "a,*", "b*,c*", "ab,cd", "k:a..c,*", ".*", "z*,0*"] {
            let t = profile_to_target(&Profile::parse(text).unwrap(), space).unwrap();
            for r in [1, 3] {
                assert_eq!(responsible_for_target(&ms, &t, space, r), brute(&ms, &t, space, r), "{text} r={r}");
            }
        }
    }

    #[test]
    fn full_space_reaches_everyone() {
        let space = SpaceConfig::new(3, 16);
        let ms = members(16);
        let t = profile_to_target(&Profile::parse("").unwrap(), space).unwrap();
        assert_eq!(responsible_for_target(&ms, &t, space, 3).len(), 16);
    }

    #[test]
    fn point_uses_closest() {
        let space = SpaceConfig::new(2, 16);
        let ms = members(10);
        let t = profile_to_target(&Profile::parse("drone,lidar").unwrap(), space).unwrap();
        let got = responsible_for_target(&ms, &t, space, 3);
        let Target::Point(p) = &t else { panic!() };
        let want: BTreeSet<_> = responsible_for_index(&ms, hilbert_encode(p), space, 3).into_iter().collect();
        assert_eq!(got, want);
    }
}
