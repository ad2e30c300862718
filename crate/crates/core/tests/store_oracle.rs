use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rpmesh_core::ar::Profile;
use rpmesh_core::id::NodeId;
use rpmesh_core::store::{PutOutcome, Store, StoreConfig, StoredEntry};
use rpmesh_core::SpaceConfig;
use rpmesh_oracles::gen;
use rpmesh_oracles::store::LinearStore;

fn entry(p: &Profile, data: &[u8], space: SpaceConfig) -> StoredEntry {
    StoredEntry::new(p.clone(), data.to_vec(), NodeId::ZERO, 0, space).unwrap()
}

fn sorted(es: Vec<StoredEntry>) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = es.into_iter().map(|e| (e.profile.canonical(), e.data)).collect();
    v.sort();
    v
}

#[test]
fn ten_thousand_entries_match_linear_scan() {
    let space = SpaceConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut store = Store::in_memory(StoreConfig::new(space));
    let mut oracle = LinearStore::new();
    let items = gen::store_corpus(&mut rng, 10_000);
    for (p, d) in &items {
        let fresh = oracle.put(p.clone(), d.clone());
        let out = store.put(entry(p, d, space)).unwrap();
        assert_eq!(out == PutOutcome::Inserted, fresh, "{p}");
    }
    assert_eq!(store.len(), oracle.len());
    for i in 0..600 {
        let q = match i % 3 {
            0 => items.choose(&mut rng).unwrap().0.clone(),
            1 => {
                let k = rng.random_range(1..=3);
                gen::simple_profile(&mut rng, k)
            }
            _ => gen::profile(&mut rng, 3),
        };
        assert_eq!(sorted(store.query(&q).unwrap()), oracle.query(&q), "query {q}");
        if i % 10 == 0 {
            let del = gen::profile(&mut rng, 2);
            assert_eq!(store.delete_matching(&del).unwrap(), oracle.delete_matching(&del), "delete {del}");
            assert_eq!(store.len(), oracle.len());
        }
    }
}

#[test]
fn acknowledged_writes_and_deletes_survive_reopen_without_flush() {
    let space = SpaceConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for round in 0..5 {
        let dir = tempfile::tempdir().unwrap();
        let mut oracle = LinearStore::new();
        let items = gen::store_corpus(&mut rng, 2_000);
        {
            let mut store = Store::open(dir.path(), StoreConfig::new(space)).unwrap();
            for (i, (p, d)) in items.iter().enumerate() {
                store.put(entry(p, d, space)).unwrap();
                oracle.put(p.clone(), d.clone());
                if i % 97 == 0 {
                    let del = gen::profile(&mut rng, 2);
                    store.delete_matching(&del).unwrap();
                    oracle.delete_matching(&del);
                }
            }
            // the process dies here: no flush, no destructor
            std::mem::forget(store);
        }
        let mut store = Store::open(dir.path(), StoreConfig::new(space)).unwrap();
        assert_eq!(store.len(), oracle.len(), "round {round}");
        let all = Profile::parse("*").unwrap();
        assert_eq!(sorted(store.query(&all).unwrap()), oracle.query(&all));
        for (p, _) in items.iter().take(200) {
            assert_eq!(sorted(store.query(p).unwrap()), oracle.query(p));
        }
    }
}
