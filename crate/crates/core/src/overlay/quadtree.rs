//! Geographic quadtree of regions. Only leaves host rings; a split
//! replaces a leaf with its four children.

use std::collections::BTreeMap;
use std::fmt;

use crate::geo::{GeoBox, GeoPoint};
use crate::id::{Endpoint, NodeId};

/// Quadrant digits from the root; the empty path is the root.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct RegionPath(String);

impl RegionPath {
    pub fn root() -> Self {
        RegionPath(String::new())
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = if s == "root" { "" } else { s };
        s.bytes()
            .all(|b| (b'0'..=b'3').contains(&b))
            .then(|| RegionPath(s.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn child(&self, digit: u8) -> RegionPath {
        debug_assert!(digit < 4);
        let mut s = self.0.clone();
        s.push((b'0' + digit) as char);
        RegionPath(s)
    }

    pub fn is_prefix_of(&self, other: &RegionPath) -> bool {
        other.0.starts_with(&self.0)
    }

    pub fn bounds(&self) -> GeoBox {
        self.0
            .bytes()
            .fold(GeoBox::WORLD, |b, c| b.child(c - b'0'))
    }
}

impl fmt::Display for RegionPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            f.write_str("root")
        } else {
            f.write_str(&self.0)
        }
    }
}

impl fmt::Debug for RegionPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RegionPath({self})")
    }
}

/// Per-leaf metadata replicated to masters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafInfo {
    pub master: NodeId,
    pub master_endpoint: Endpoint,
    pub ring_size: u32,
    /// Bumped by the leaf's master whenever it changes this entry.
    pub epoch: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QuadTreeSnapshot {
    pub version: u64,
    leaves: BTreeMap<RegionPath, LeafInfo>,
}

impl QuadTreeSnapshot {
    /// A tree whose root is the only leaf.
    pub fn single(info: LeafInfo) -> Self {
        let mut leaves = BTreeMap::new();
        leaves.insert(RegionPath::root(), info);
        QuadTreeSnapshot { version: 1, leaves }
    }

    pub fn from_leaves(version: u64, leaves: BTreeMap<RegionPath, LeafInfo>) -> Self {
        QuadTreeSnapshot { version, leaves }
    }

    pub fn leaves(&self) -> &BTreeMap<RegionPath, LeafInfo> {
        &self.leaves
    }

    pub fn leaf(&self, path: &RegionPath) -> Option<&LeafInfo> {
        self.leaves.get(path)
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    /// The leaf whose box holds `p`, walking down from the root.
    pub fn leaf_for(&self, p: GeoPoint) -> Option<RegionPath> {
        let mut path = RegionPath::root();
        loop {
            if self.leaves.contains_key(&path) {
                return Some(path);
            }
            if path.depth() > 64 {
                return None;
            }
            let digit = path.bounds().quadrant_of(p);
            path = path.child(digit);
        }
    }

    /// Leaves covering a path: the leaf itself, the leaf above it after a
    /// stale reference, or none.
    pub fn resolve(&self, path: &RegionPath) -> Option<RegionPath> {
        (0..=path.depth())
            .rev()
            .map(|n| RegionPath(path.0[..n].to_string()))
            .find(|p| self.leaves.contains_key(p))
    }

    pub fn set_leaf(&mut self, path: RegionPath, info: LeafInfo) {
        self.leaves.insert(path, info);
        self.version += 1;
    }

    /// Replaces `path` with its four children.
    pub fn split(&mut self, path: &RegionPath, children: [LeafInfo; 4]) -> bool {
        if self.leaves.remove(path).is_none() {
            return false;
        }
        for (digit, info) in children.into_iter().enumerate() {
            self.leaves.insert(path.child(digit as u8), info);
        }
        self.version += 1;
        true
    }

    /// Folds another replica of the tree into this one: leaves are united,
    /// split parents dropped, and per-leaf conflicts go to the higher
    /// epoch. Returns whether the content changed.
    pub fn merge(&mut self, other: &QuadTreeSnapshot) -> bool {
        let mut merged = self.leaves.clone();
        for (path, info) in &other.leaves {
            match merged.get(path) {
                Some(mine) if (mine.epoch, mine.master) >= (info.epoch, info.master) => {}
                _ => {
                    merged.insert(path.clone(), info.clone());
                }
            }
        }
        let paths: Vec<RegionPath> = merged.keys().cloned().collect();
        merged.retain(|p, _| !paths.iter().any(|q| q != p && p.is_prefix_of(q)));
        if merged == self.leaves {
            if other.leaves == merged {
                self.version = self.version.max(other.version);
            }
            return false;
        }
        let bump = u64::from(merged != other.leaves);
        self.leaves = merged;
        self.version = self.version.max(other.version) + bump;
        true
    }

    /// Whether the leaves tile the root box: every internal node has all
    /// four children and no leaf has a descendant leaf.
    pub fn is_tiling(&self) -> bool {
        fn complete(t: &QuadTreeSnapshot, p: &RegionPath, budget: &mut usize) -> bool {
            if *budget == 0 {
                return false;
            }
            *budget -= 1;
            if t.leaves.contains_key(p) {
                return !t
                    .leaves
                    .keys()
                    .any(|k| k != p && p.is_prefix_of(k));
            }
            (0..4).all(|d| complete(t, &p.child(d), budget))
        }
        let mut budget = self.leaves.len() * 4 + 1;
        !self.leaves.is_empty() && complete(self, &RegionPath::root(), &mut budget)
    }
}

/// Four-way partition of members by position, or `None` when a child would
/// hold fewer than `min_child` nodes or the ring is not above `capacity`.
pub fn plan_split<T: Clone>(
    bounds: GeoBox,
    members: &[(T, GeoPoint)],
    capacity: usize,
    min_child: usize,
) -> Option<[Vec<T>; 4]> {
    if members.len() <= capacity {
        return None;
    }
    let mut parts: [Vec<T>; 4] = Default::default();
    for (m, g) in members {
        parts[bounds.quadrant_of(*g) as usize].push(m.clone());
    }
    parts.iter().all(|p| p.len() >= min_child).then_some(parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn info(n: u64) -> LeafInfo {
        LeafInfo {
            master: NodeId::derive("m", n),
            master_endpoint: format!("sim:{n}"),
            ring_size: 1,
            epoch: 0,
        }
    }

    #[test]
    fn split_keeps_tiling() {
        let mut t = QuadTreeSnapshot::single(info(0));
        assert!(t.is_tiling());
        assert!(t.split(&RegionPath::root(), [info(1), info(2), info(3), info(4)]));
        assert_eq!(t.version, 2);
        assert!(t.is_tiling());
        let two = RegionPath::parse("2").unwrap();
        t.split(&two, [info(5), info(6), info(7), info(8)]);
        assert!(t.is_tiling());
        assert_eq!(t.leaves().len(), 7);
        let mut broken = t.clone();
        broken.leaves.remove(&RegionPath::parse("21").unwrap());
        assert!(!broken.is_tiling());
    }

    #[test]
    fn concurrent_splits_merge() {
        let mut base = QuadTreeSnapshot::single(info(0));
        base.split(&RegionPath::root(), [info(1), info(2), info(3), info(4)]);
        let mut a = base.clone();
        let mut b = base.clone();
        a.split(&RegionPath::parse("0").unwrap(), [info(5), info(6), info(7), info(8)]);
        let mut moved = info(9);
        moved.epoch = 1;
        b.set_leaf(RegionPath::parse("3").unwrap(), moved.clone());
        assert_eq!(a.version, b.version);
        let (a0, b0) = (a.clone(), b.clone());
        assert!(a.merge(&b0));
        assert!(b.merge(&a0));
        assert_eq!(a, b);
        assert!(a.version > a0.version);
        assert!(a.is_tiling());
        assert_eq!(a.leaf(&RegionPath::parse("3").unwrap()), Some(&moved));
        assert!(!a.clone().merge(&b));
    }

    #[test]
    fn placement_by_containment() {
        let mut t = QuadTreeSnapshot::single(info(0));
        t.split(&RegionPath::root(), [info(1), info(2), info(3), info(4)]);
        // north-west is digit 2
        let p = GeoPoint::new(40.0583, -74.4056).unwrap();
        let leaf = t.leaf_for(p).unwrap();
        assert_eq!(leaf.as_str(), "2");
        assert!(leaf.bounds().contains(p));
        // stale reference to a split parent resolves upward only when present
        assert_eq!(t.resolve(&RegionPath::parse("23").unwrap()), Some(leaf));
        assert_eq!(t.resolve(&RegionPath::root()), None);
    }

    #[test]
    fn split_plan_rules() {
        let b = GeoBox::WORLD;
        let pts = [(-45.0, -90.0), (-45.0, 90.0), (45.0, -90.0), (45.0, 90.0)];
        let members: Vec<(usize, GeoPoint)> = (0..12)
            .map(|i| (i, GeoPoint::new(pts[i % 4].0, pts[i % 4].1).unwrap()))
            .collect();
        assert!(plan_split(b, &members[..8], 8, 2).is_none());
        let parts = plan_split(b, &members, 8, 2).unwrap();
        assert!(parts.iter().all(|p| p.len() == 3));
        assert_eq!(parts[0], vec![0, 4, 8]);
        let crowded: Vec<(usize, GeoPoint)> =
            (0..9).map(|i| (i, GeoPoint::new(10.0, 10.0).unwrap())).collect();
        assert!(plan_split(b, &crowded, 8, 2).is_none());
    }
}
