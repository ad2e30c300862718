use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rpmesh_core::id::NodeId;
use rpmesh_core::overlay::responsible_for_target;
use rpmesh_core::sfc::{routing_target, KeywordSpaceRegion, Target, AxisInterval};
use rpmesh_core::SpaceConfig;
use rpmesh_oracles::{cells, gen};

#[test]
fn trie_walk_equals_cell_enumeration() {
    let space = SpaceConfig::new(2, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..300 {
        let n = rng.random_range(1..40);
        let members: Vec<NodeId> = (0..n).map(|i| NodeId::derive(&format!("m{trial}-{i}"), 0)).collect();
        let r = rng.random_range(1..5);
        let mut ranges = Vec::new();
        for _ in 0..2 {
            let a = rng.random_range(0..16u64);
            let b = rng.random_range(0..16u64);
            ranges.push(AxisInterval { lo: a.min(b), hi: a.max(b) });
        }
        let region = KeywordSpaceRegion::new(ranges, 4).unwrap();
        let want = cells::responsible(&members, &cells::cell_indices(&region), space, r);
        let got = responsible_for_target(&members, &Target::Region(region.clone()), space, r);
        assert_eq!(got, want, "trial {trial} region {region:?}");
    }
}

#[test]
fn profile_targets_match_cell_oracle() {
    let space = SpaceConfig::new(2, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let members: Vec<NodeId> = (0..64).map(|i| NodeId::derive(&format!("n{i}"), 3)).collect();
    let table = cells::ResponsibilityTable::new(&members, space, 3);
    for _ in 0..2_000 {
        let p = gen::profile(&mut rng, 2);
        let t = routing_target(&p, space).unwrap();
        let got = responsible_for_target(&members, &t, space, 3);
        assert_eq!(got, table.for_profile(&p), "profile {p}");
    }
}
