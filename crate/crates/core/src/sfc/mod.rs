//! Keyword-space indexing: keyword terms become coordinates, profiles become
//! points or regions, and points/regions become Hilbert indices or clusters
//! of contiguous index ranges.

mod hilbert;
mod keyword;

use thiserror::Error;

use crate::ar::{Profile, Term};
use crate::constants::SpaceConfig;

pub use hilbert::{hilbert_decode, hilbert_encode};
pub use keyword::{
    char_rank, chars_per_axis, encode_keyword, is_keyword_char, positional_cmp, AxisInterval,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SfcError {
    #[error("invalid keyword {0:?}")]
    InvalidKeyword(String),
    #[error("index {0} outside the curve")]
    InvalidIndex(u128),
    #[error("profile has {terms} terms but the keyword space has {dimensions} dimensions")]
    ProfileTooWide { terms: usize, dimensions: u32 },
    #[error("invalid point: {0}")]
    InvalidPoint(String),
}

/// Position along the Hilbert curve, `< 2^(d*b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SfcIndex(pub u128);

/// A cell of the keyword grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KeywordSpacePoint {
    coords: Vec<u64>,
    order: u32,
}

impl KeywordSpacePoint {
    pub fn new(coords: Vec<u64>, order: u32) -> Result<Self, SfcError> {
        if coords.is_empty() {
            return Err(SfcError::InvalidPoint("no coordinates".into()));
        }
        if order == 0 || order > 64 {
            return Err(SfcError::InvalidPoint(format!("order {order}")));
        }
        if order < 64 {
            if let Some(c) = coords.iter().find(|&&c| c >> order != 0) {
                return Err(SfcError::InvalidPoint(format!(
                    "coordinate {c} needs more than {order} bits"
                )));
            }
        }
        Ok(KeywordSpacePoint { coords, order })
    }

    pub fn coords(&self) -> &[u64] {
        &self.coords
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn dimensions(&self) -> u32 {
        self.coords.len() as u32
    }
}

/// Axis-aligned box of grid cells.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KeywordSpaceRegion {
    ranges: Vec<AxisInterval>,
    order: u32,
}

impl KeywordSpaceRegion {
    pub fn new(ranges: Vec<AxisInterval>, order: u32) -> Result<Self, SfcError> {
        if ranges.is_empty() {
            return Err(SfcError::InvalidPoint("no axes".into()));
        }
        for r in &ranges {
            if r.lo > r.hi || (order < 64 && r.hi >> order != 0) {
                return Err(SfcError::InvalidPoint(format!(
                    "interval [{}, {}] outside the axis",
                    r.lo, r.hi
                )));
            }
        }
        Ok(KeywordSpaceRegion { ranges, order })
    }

    pub fn full(space: SpaceConfig) -> Self {
        let hi = axis_max(space.order);
        KeywordSpaceRegion {
            ranges: vec![AxisInterval { lo: 0, hi }; space.dimensions as usize],
            order: space.order,
        }
    }

    pub fn from_point(p: &KeywordSpacePoint) -> Self {
        KeywordSpaceRegion {
            ranges: p.coords.iter().map(|&c| AxisInterval::point(c)).collect(),
            order: p.order,
        }
    }

    pub fn ranges(&self) -> &[AxisInterval] {
        &self.ranges
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn dimensions(&self) -> u32 {
        self.ranges.len() as u32
    }

    pub fn contains(&self, coords: &[u64]) -> bool {
        self.ranges.iter().zip(coords).all(|(r, &c)| r.contains(c))
    }

    /// Number of cells, saturating.
    pub fn cell_count(&self) -> u128 {
        self.ranges.iter().fold(1u128, |acc, r| {
            acc.saturating_mul((r.hi - r.lo) as u128 + 1)
        })
    }

    /// The lowest corner cell.
    pub fn corner(&self) -> KeywordSpacePoint {
        KeywordSpacePoint {
            coords: self.ranges.iter().map(|r| r.lo).collect(),
            order: self.order,
        }
    }
}

fn axis_max(order: u32) -> u64 {
    if order >= 64 {
        u64::MAX
    } else {
        (1u64 << order) - 1
    }
}

/// Closed range of curve indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Segment {
    pub lo: u128,
    pub hi: u128,
}

impl Segment {
    pub fn len(&self) -> u128 {
        self.hi - self.lo + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, i: u128) -> bool {
        self.lo <= i && i <= self.hi
    }
}

/// Sorted, disjoint, non-adjacent index segments.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Cluster {
    segments: Vec<Segment>,
}

impl Cluster {
    /// Builds a cluster from arbitrary segments, sorting and merging any that
    /// overlap or touch.
    pub fn from_segments(mut segs: Vec<Segment>) -> Self {
        segs.sort();
        let mut out: Vec<Segment> = Vec::with_capacity(segs.len());
        for s in segs {
            match out.last_mut() {
                Some(last) if s.lo <= last.hi.saturating_add(1) => {
                    last.hi = last.hi.max(s.hi);
                }
                _ => out.push(s),
            }
        }
        Cluster { segments: out }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn contains(&self, i: u128) -> bool {
        let pos = self.segments.partition_point(|s| s.hi < i);
        self.segments.get(pos).is_some_and(|s| s.contains(i))
    }

    /// Total number of indices covered, saturating.
    pub fn covered(&self) -> u128 {
        self.segments
            .iter()
            .fold(0u128, |acc, s| acc.saturating_add(s.len()))
    }

    /// Merges across the smallest gaps until at most `max_segments` remain.
    pub fn coarsen(&mut self, max_segments: usize) {
        let max_segments = max_segments.max(1);
        if self.segments.len() <= max_segments {
            return;
        }
        let merges = self.segments.len() - max_segments;
        let mut gaps: Vec<(u128, usize)> = self
            .segments
            .windows(2)
            .enumerate()
            .map(|(i, w)| (w[1].lo - w[0].hi - 1, i))
            .collect();
        gaps.sort();
        let mut bridge = vec![false; self.segments.len()];
        for &(_, i) in gaps.iter().take(merges) {
            bridge[i] = true;
        }
        let mut out: Vec<Segment> = Vec::with_capacity(max_segments);
        let mut current = self.segments[0];
        for i in 1..self.segments.len() {
            if bridge[i - 1] {
                current.hi = self.segments[i].hi;
            } else {
                out.push(current);
                current = self.segments[i];
            }
        }
        out.push(current);
        self.segments = out;
    }
}

/// An aligned run of `2^bits` consecutive indices starting at `base`; it is
/// exactly the set of cells of one sub-cube visited by the curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub base: u128,
    pub bits: u32,
    /// Whether every cell of the block lies in the region being decomposed.
    pub inside: bool,
}

impl Block {
    pub fn last(&self) -> u128 {
        if self.bits >= 128 {
            u128::MAX
        } else {
            self.base + ((1u128 << self.bits) - 1)
        }
    }

    pub fn segment(&self) -> Segment {
        Segment {
            lo: self.base,
            hi: self.last(),
        }
    }
}

/// Walks the curve's sub-cube hierarchy, calling `visit` for every sub-cube
/// that intersects the region. Sub-cubes wholly inside the region are not
/// subdivided; for partial ones `visit` returns whether to descend.
pub fn decompose_region<F>(region: &KeywordSpaceRegion, mut visit: F)
where
    F: FnMut(Block) -> bool,
{
    let dims = region.dimensions() as usize;
    let order = region.order();
    let mut corner = vec![0u64; dims];
    walk(region, order, &mut corner, dims, &mut visit);
}

fn walk<F>(
    region: &KeywordSpaceRegion,
    side_bits: u32,
    corner: &mut Vec<u64>,
    dims: usize,
    visit: &mut F,
) where
    F: FnMut(Block) -> bool,
{
    let span = axis_max(side_bits);
    let mut inside = true;
    for (r, &c) in region.ranges().iter().zip(corner.iter()) {
        let top = c + span;
        if top < r.lo || c > r.hi {
            return;
        }
        if c < r.lo || top > r.hi {
            inside = false;
        }
    }
    let bits = dims as u32 * side_bits;
    let base = if bits >= 128 {
        0
    } else {
        let cell = KeywordSpacePoint {
            coords: corner.clone(),
            order: region.order(),
        };
        (hilbert_encode(&cell).0 >> bits) << bits
    };
    let descend = visit(Block { base, bits, inside });
    if inside || !descend || side_bits == 0 {
        return;
    }
    let half = 1u64 << (side_bits - 1);
    for child in 0..(1usize << dims) {
        let saved = corner.clone();
        for (axis, c) in corner.iter_mut().enumerate() {
            if child >> axis & 1 == 1 {
                *c += half;
            }
        }
        walk(region, side_bits - 1, corner, dims, visit);
        *corner = saved;
    }
}

/// Index segments covering the region. Exact when the exact cluster has at
/// most `max_segments` segments; otherwise the smallest gaps are bridged.
pub fn clusters_for_region(region: &KeywordSpaceRegion, max_segments: usize) -> Cluster {
    let mut segs = Vec::new();
    decompose_region(region, |block| {
        if block.inside {
            segs.push(block.segment());
        }
        true
    });
    let mut cluster = Cluster::from_segments(segs);
    cluster.coarsen(max_segments);
    cluster
}

/// Routing target of a profile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    /// All terms are exact: a single cell.
    Point(KeywordSpacePoint),
    /// Some term is partial, wildcard or range.
    Region(KeywordSpaceRegion),
}

impl Target {
    pub fn region(&self) -> KeywordSpaceRegion {
        match self {
            Target::Point(p) => KeywordSpaceRegion::from_point(p),
            Target::Region(r) => r.clone(),
        }
    }

    pub fn is_point(&self) -> bool {
        matches!(self, Target::Point(_))
    }

    /// Lowest-index cell of the target.
    pub fn anchor(&self) -> SfcIndex {
        match self {
            Target::Point(p) => hilbert_encode(p),
            Target::Region(r) => {
                let mut best: Option<u128> = None;
                decompose_region(r, |block| {
                    if best.is_some_and(|b| b < block.base) {
                        return false;
                    }
                    if block.inside {
                        best = Some(best.map_or(block.base, |b| b.min(block.base)));
                    }
                    true
                });
                SfcIndex(best.unwrap_or(0))
            }
        }
    }
}

/// Coordinate interval of one term on its axis.
pub fn term_interval(term: &Term, order: u32) -> Result<AxisInterval, SfcError> {
    match term {
        Term::Range { attr, lo, hi } => {
            let lo = encode_keyword(&format!("{attr}:{lo}"), order)?;
            let hi = encode_keyword(&format!("{attr}:{hi}"), order)?;
            Ok(AxisInterval {
                lo: lo.lo,
                hi: hi.hi.max(lo.lo),
            })
        }
        other => encode_keyword(&other.routing_text(), order),
    }
}

/// Maps a profile onto the keyword space: all-exact profiles give a point,
/// anything else a region. Missing trailing axes are bare wildcards.
pub fn profile_to_target(profile: &Profile, space: SpaceConfig) -> Result<Target, SfcError> {
    let d = space.dimensions as usize;
    let terms = profile.terms();
    if terms.len() > d {
        return Err(SfcError::ProfileTooWide {
            terms: terms.len(),
            dimensions: space.dimensions,
        });
    }
    let mut ranges = Vec::with_capacity(d);
    for t in terms {
        ranges.push(term_interval(t, space.order)?);
    }
    while ranges.len() < d {
        ranges.push(encode_keyword("*", space.order)?);
    }
    let simple = terms.len() == d && terms.iter().all(Term::is_exact);
    if simple {
        let coords = ranges.iter().map(|r| r.lo).collect();
        Ok(Target::Point(KeywordSpacePoint::new(coords, space.order)?))
    } else {
        Ok(Target::Region(KeywordSpaceRegion::new(ranges, space.order)?))
    }
}

/// Profile target for routing: profiles wider than the keyword space are
/// routed on their first `d` terms.
pub fn routing_target(profile: &Profile, space: SpaceConfig) -> Result<Target, SfcError> {
    let d = space.dimensions as usize;
    if profile.terms().len() > d {
        let head = Profile::new(profile.terms()[..d].to_vec());
        profile_to_target(&head, space)
    } else {
        profile_to_target(profile, space)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region(ranges: &[(u64, u64)], order: u32) -> KeywordSpaceRegion {
        KeywordSpaceRegion::new(
            ranges
                .iter()
                .map(|&(lo, hi)| AxisInterval { lo, hi })
                .collect(),
            order,
        )
        .unwrap()
    }

    #[test]
    fn full_space_is_one_segment() {
        let c = clusters_for_region(&KeywordSpaceRegion::full(SpaceConfig::new(2, 4)), 8);
        assert_eq!(c.segments(), &[Segment { lo: 0, hi: 255 }]);
        let c = clusters_for_region(&KeywordSpaceRegion::full(SpaceConfig::new(3, 16)), 8);
        assert_eq!(
            c.segments(),
            &[Segment {
                lo: 0,
                hi: (1u128 << 48) - 1
            }]
        );
    }

    #[test]
    fn single_cell_is_degenerate_segment() {
        let r = region(&[(2, 2), (1, 1)], 2);
        let i = hilbert_encode(&r.corner()).0;
        assert_eq!(
            clusters_for_region(&r, 4).segments(),
            &[Segment { lo: i, hi: i }]
        );
    }

    #[test]
    fn column_matches_brute_force() {
        let r = region(&[(0, 0), (0, 3)], 2);
        let mut idx: Vec<u128> = (0..4)
            .map(|y| hilbert_encode(&KeywordSpacePoint::new(vec![0, y], 2).unwrap()).0)
            .collect();
        idx.sort();
        let expected =
            Cluster::from_segments(idx.iter().map(|&i| Segment { lo: i, hi: i }).collect());
        assert_eq!(clusters_for_region(&r, usize::MAX), expected);
    }

    #[test]
    fn coarsening_bridges_smallest_gaps() {
        let mut c = Cluster::from_segments(vec![
            Segment { lo: 0, hi: 1 },
            Segment { lo: 10, hi: 11 },
            Segment { lo: 13, hi: 13 },
            Segment { lo: 40, hi: 41 },
        ]);
        c.coarsen(2);
        assert_eq!(
            c.segments(),
            &[Segment { lo: 0, hi: 13 }, Segment { lo: 40, hi: 41 }]
        );
        c.coarsen(1);
        assert_eq!(c.segments(), &[Segment { lo: 0, hi: 41 }]);
    }

    #[test]
    fn anchor_is_lowest_index() {
        let r = region(&[(1, 3), (0, 2)], 2);
        let mut min = u128::MAX;
        for x in 1..=3 {
            for y in 0..=2 {
                let i = hilbert_encode(&KeywordSpacePoint::new(vec![x, y], 2).unwrap()).0;
                min = min.min(i);
            }
        }
        assert_eq!(Target::Region(r).anchor(), SfcIndex(min));
    }

    #[test]
    fn simple_and_complex_profiles() {
        let space = SpaceConfig::new(2, 16);
        let p = Profile::parse("Drone,LiDAR").unwrap();
        assert!(profile_to_target(&p, space).unwrap().is_point());

        let p = Profile::parse("Drone,Li*").unwrap();
        let Target::Region(r) = profile_to_target(&p, space).unwrap() else {
            panic!("expected a region");
        };
        assert!(r.ranges()[0].is_point());
        let li = encode_keyword("li*", 16).unwrap();
        assert_eq!(r.ranges()[1], li);

        let p = Profile::parse("").unwrap();
        assert_eq!(
            profile_to_target(&p, space).unwrap(),
            Target::Region(KeywordSpaceRegion::full(space))
        );
    }

    #[test]
    fn too_wide_profile_is_rejected() {
        let p = Profile::parse("a,b,c").unwrap();
        assert_eq!(
            profile_to_target(&p, SpaceConfig::new(2, 16)),
            Err(SfcError::ProfileTooWide {
                terms: 3,
                dimensions: 2
            })
        );
        assert!(routing_target(&p, SpaceConfig::new(2, 16))
            .unwrap()
            .is_point());
    }

    #[test]
    fn range_term_spans_bounds() {
        let space = SpaceConfig::new(2, 30);
        let p = Profile::parse("temp:10..20,x").unwrap();
        let Target::Region(r) = profile_to_target(&p, space).unwrap() else {
            panic!("expected a region");
        };
        let v = encode_keyword("temp:000000000015", 30).unwrap().lo;
        assert!(r.ranges()[0].contains(v));
    }
}
