use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rpmesh_core::ar::{matches, Profile};
use rpmesh_oracles::{gen, matcher};

#[test]
fn hundred_thousand_pairs_agree_with_witness_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut hits = 0;
    for i in 0..100_000 {
        let stored = gen::profile(&mut rng, 4);
        let query = gen::profile(&mut rng, 3);
        let want = matcher::satisfies(&stored, &query);
        assert_eq!(matches(&stored, &query), want, "case {i}: stored {stored} query {query}");
        hits += want as usize;
    }
    // both outcomes must be well represented
    assert!(hits > 10_000 && hits < 90_000, "{hits}");
}

#[test]
fn textual_round_trip_preserves_matching() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10_000 {
        let p = gen::profile(&mut rng, 4);
        let back = Profile::parse(&p.to_string()).unwrap();
        assert_eq!(back, p);
    }
}
