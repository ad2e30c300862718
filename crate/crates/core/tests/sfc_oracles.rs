use std::collections::BTreeSet;

use proptest::prelude::*;
use rpmesh_core::sfc::{
    clusters_for_region, encode_keyword, hilbert_decode, hilbert_encode, AxisInterval, Cluster,
    KeywordSpacePoint, KeywordSpaceRegion, SfcIndex, Segment,
};

/// Order-k 2-D curve as the list of visited cells, built from four
/// transformed copies of the order k-1 curve.
fn reference_curve(order: u32) -> Vec<(u64, u64)> {
    if order == 0 {
        return vec![(0, 0)];
    }
    let prev = reference_curve(order - 1);
    let s = 1u64 << (order - 1);
    let mut out = Vec::with_capacity(prev.len() * 4);
    out.extend(prev.iter().map(|&(x, y)| (y, x)));
    out.extend(prev.iter().map(|&(x, y)| (x, y + s)));
    out.extend(prev.iter().map(|&(x, y)| (x + s, y + s)));
    out.extend(prev.iter().map(|&(x, y)| (s - 1 - y + s, s - 1 - x)));
    out
}

fn point(coords: &[u64], order: u32) -> KeywordSpacePoint {
    KeywordSpacePoint::new(coords.to_vec(), order).unwrap()
}

fn all_cells(dims: u32, order: u32) -> Vec<Vec<u64>> {
    let side = 1u64 << order;
    let total = side.pow(dims);
    (0..total)
        .map(|mut n| {
            (0..dims)
                .map(|_| {
                    let c = n % side;
                    n /= side;
                    c
                })
                .collect()
        })
        .collect()
}

#[test]
fn matches_recursive_reference_in_two_dimensions() {
    for order in 1..=7 {
        for (i, &(x, y)) in reference_curve(order).iter().enumerate() {
            assert_eq!(
                hilbert_encode(&point(&[x, y], order)),
                SfcIndex(i as u128),
                "order {order} cell ({x},{y})"
            );
        }
    }
}

#[test]
fn bijective_and_adjacent_exhaustively() {
    for dims in [2u32, 3] {
        for order in 1..=6 {
            let cells = all_cells(dims, order);
            let total = cells.len();
            let mut by_index = vec![None; total];
            for c in &cells {
                let i = hilbert_encode(&point(c, order)).0 as usize;
                assert!(i < total);
                assert!(by_index[i].is_none(), "index {i} hit twice");
                by_index[i] = Some(c.clone());
                assert_eq!(
                    hilbert_decode(SfcIndex(i as u128), dims, order).unwrap().coords(),
                    &c[..]
                );
            }
            let ordered: Vec<Vec<u64>> = by_index.into_iter().map(Option::unwrap).collect();
            for w in ordered.windows(2) {
                let l1: u64 = w[0].iter().zip(&w[1]).map(|(a, b)| a.abs_diff(*b)).sum();
                assert_eq!(l1, 1, "d={dims} b={order} {:?} -> {:?}", w[0], w[1]);
            }
        }
    }
}

#[test]
fn golden_vectors_hold() {
    let text = include_str!("../golden/hilbert_vectors.txt");
    let mut count = 0;
    for line in text.lines() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        // d=<d> b=<b> (c0,c1,...) -> index
        let mut parts = line.split_whitespace();
        let d: u32 = parts.next().unwrap()[2..].parse().unwrap();
        let b: u32 = parts.next().unwrap()[2..].parse().unwrap();
        let coords: Vec<u64> = parts.next().unwrap().trim_matches(|c| c == '(' || c == ')')
            .split(',')
            .map(|c| c.parse().unwrap())
            .collect();
        assert_eq!(parts.next(), Some("->"));
        let index: u128 = parts.next().unwrap().parse().unwrap();
        assert_eq!(coords.len() as u32, d);
        assert_eq!(hilbert_encode(&point(&coords, b)).0, index, "{line}");
        count += 1;
    }
    assert_eq!(count, 5020);
}

fn brute_cluster(region: &KeywordSpaceRegion) -> Cluster {
    let dims = region.dimensions();
    let order = region.order();
    let idx: BTreeSet<u128> = all_cells(dims, order)
        .into_iter()
        .filter(|c| region.contains(c))
        .map(|c| hilbert_encode(&point(&c, order)).0)
        .collect();
    Cluster::from_segments(idx.into_iter().map(|i| Segment { lo: i, hi: i }).collect())
}

fn all_regions(dims: u32, order: u32) -> Vec<KeywordSpaceRegion> {
    let side = 1u64 << order;
    let intervals: Vec<AxisInterval> = (0..side)
        .flat_map(|lo| (lo..side).map(move |hi| AxisInterval { lo, hi }))
        .collect();
    let mut out = vec![vec![]];
    for _ in 0..dims {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<AxisInterval>| {
                intervals.iter().map(move |iv| {
                    let mut p = prefix.clone();
                    p.push(*iv);
                    p
                })
            })
            .collect();
    }
    out.into_iter()
        .map(|r| KeywordSpaceRegion::new(r, order).unwrap())
        .collect()
}

#[test]
fn clusters_equal_brute_force_on_small_grids() {
    for (dims, order) in [(2, 1), (2, 2), (2, 3), (2, 4), (3, 1), (3, 2), (4, 1)] {
        for r in all_regions(dims, order) {
            assert_eq!(clusters_for_region(&r, usize::MAX), brute_cluster(&r), "{r:?}");
        }
    }
}

fn region_strategy(dims: u32, order: u32) -> impl Strategy<Value = KeywordSpaceRegion> {
    let side = 1u64 << order;
    proptest::collection::vec((0..side, 0..side), dims as usize).prop_map(move |v| {
        KeywordSpaceRegion::new(
            v.into_iter()
                .map(|(a, b)| AxisInterval {
                    lo: a.min(b),
                    hi: a.max(b),
                })
                .collect(),
            order,
        )
        .unwrap()
    })
}

proptest! {
    #[test]
    fn round_trip_large_grids(coords in proptest::collection::vec(0u64..(1 << 16), 3)) {
        let p = point(&coords, 16);
        prop_assert_eq!(hilbert_decode(hilbert_encode(&p), 3, 16).unwrap(), p);
    }

    #[test]
    fn round_trip_order_eight(coords in proptest::collection::vec(0u64..256, 2..=3)) {
        let p = point(&coords, 8);
        let d = coords.len() as u32;
        prop_assert_eq!(hilbert_decode(hilbert_encode(&p), d, 8).unwrap(), p);
    }

    #[test]
    fn exact_on_d2_b6(r in region_strategy(2, 6)) {
        prop_assert_eq!(clusters_for_region(&r, usize::MAX), brute_cluster(&r));
    }

    #[test]
    fn coarsening_is_a_bounded_superset(r in region_strategy(2, 5), k in 1usize..6) {
        let exact = clusters_for_region(&r, usize::MAX);
        let coarse = clusters_for_region(&r, k);
        prop_assert!(coarse.segments().len() <= k);
        for s in exact.segments() {
            for i in s.lo..=s.hi {
                prop_assert!(coarse.contains(i));
            }
        }
        if exact.segments().len() <= k {
            prop_assert_eq!(coarse, exact);
        }
    }

    #[test]
    fn prefix_locality(word in "[a-z0-9.:_-]{1,12}", cut in 0usize..12, order in 6u32..=64) {
        let cut = cut.min(word.len() - 1) + 1;
        let prefix = format!("{}*", &word[..cut]);
        let iv = encode_keyword(&prefix, order).unwrap();
        let v = encode_keyword(&word, order).unwrap();
        prop_assert!(iv.lo <= v.lo && v.lo <= iv.hi);
    }
}
