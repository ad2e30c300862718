//! Keyword-space cells by enumeration, and the rendezvous points
//! responsible for them by sorting every member by XOR distance.

use std::collections::BTreeSet;

use rpmesh_core::ar::Profile;
use rpmesh_core::id::NodeId;
use rpmesh_core::sfc::{hilbert_encode, routing_target, KeywordSpacePoint, KeywordSpaceRegion};
use rpmesh_core::SpaceConfig;

/// Every cell of `region`, as coordinate vectors.
pub fn region_cells(region: &KeywordSpaceRegion) -> Vec<Vec<u64>> {
    let mut out = vec![Vec::new()];
    for r in region.ranges() {
        let mut next = Vec::with_capacity(out.len() * (r.hi - r.lo + 1) as usize);
        for prefix in &out {
            for v in r.lo..=r.hi {
                let mut c = prefix.clone();
                c.push(v);
                next.push(c);
            }
        }
        out = next;
    }
    out
}

/// Curve indices of every cell in `region`.
pub fn cell_indices(region: &KeywordSpaceRegion) -> BTreeSet<u128> {
    region_cells(region)
        .into_iter()
        .map(|c| hilbert_encode(&KeywordSpacePoint::new(c, region.order()).expect("cell in range")).0)
        .collect()
}

/// Maximal runs of consecutive indices.
pub fn runs(indices: &BTreeSet<u128>) -> Vec<(u128, u128)> {
    let mut out: Vec<(u128, u128)> = Vec::new();
    for &i in indices {
        match out.last_mut() {
            Some((_, hi)) if *hi + 1 == i => *hi = i,
            _ => out.push((i, i)),
        }
    }
    out
}

/// Cells a profile addresses on the routing path. Keep spaces small.
pub fn profile_cells(profile: &Profile, space: SpaceConfig) -> BTreeSet<u128> {
    let target = routing_target(profile, space).expect("routable profile");
    cell_indices(&target.region())
}

/// The identifier whose top `d*b` bits are the curve index.
pub fn key_of(index: u128, space: SpaceConfig) -> [u8; 20] {
    let bits = space.index_bits();
    let top = if bits == 0 { 0 } else { index << (128 - bits) };
    let mut out = [0u8; 20];
    out[..16].copy_from_slice(&top.to_be_bytes());
    out
}

fn xor(a: &[u8; 20], b: &[u8; 20]) -> [u8; 20] {
    let mut d = [0u8; 20];
    for i in 0..20 {
        d[i] = a[i] ^ b[i];
    }
    d
}

/// The `r` members XOR-closest to the key of `index`.
pub fn closest(members: &[NodeId], index: u128, space: SpaceConfig, r: usize) -> Vec<NodeId> {
    let key = key_of(index, space);
    let mut v: Vec<([u8; 20], NodeId)> = members.iter().map(|m| (xor(&m.0, &key), *m)).collect();
    v.sort();
    v.into_iter().take(r).map(|(_, m)| m).collect()
}

/// Union of the responsible sets of every index.
pub fn responsible(members: &[NodeId], indices: &BTreeSet<u128>, space: SpaceConfig, r: usize) -> BTreeSet<NodeId> {
    let mut out = BTreeSet::new();
    for &i in indices {
        out.extend(closest(members, i, space, r));
        if out.len() == members.len() {
            break;
        }
    }
    out
}

/// Responsible sets for every cell of a small space, computed once.
pub struct ResponsibilityTable {
    space: SpaceConfig,
    sets: Vec<Vec<NodeId>>,
}

impl ResponsibilityTable {
    pub fn new(members: &[NodeId], space: SpaceConfig, r: usize) -> Self {
        let cells = 1u128 << space.index_bits();
        assert!(cells <= 1 << 20, "space too large to tabulate");
        let sets = (0..cells).map(|i| closest(members, i, space, r)).collect();
        ResponsibilityTable { space, sets }
    }

    pub fn for_index(&self, i: u128) -> &[NodeId] {
        &self.sets[i as usize]
    }

    pub fn for_profile(&self, profile: &Profile) -> BTreeSet<NodeId> {
        profile_cells(profile, self.space)
            .into_iter()
            .flat_map(|i| self.sets[i as usize].iter().copied())
            .collect()
    }
}
