use rpmesh_simnet::workload::{dimension_workload, exact_query_workload, store_workload};

#[test]
fn stores_complete_at_every_size() {
    for n in [4, 16, 64] {
        let w = store_workload(9, n, 50).unwrap();
        assert_eq!(w.failed, 0, "{n} nodes");
        assert_eq!(w.ops, 50);
        assert!(w.mean_ms > 0.0);
    }
}

#[test]
fn exact_queries_find_their_element() {
    let q = exact_query_workload(4, 16, 20).unwrap();
    assert_eq!(q.failed, 0);
    assert!(q.mean_hops >= 1.0);
}

#[test]
fn larger_rings_cost_more_but_not_linearly() {
    let small = store_workload(2, 4, 40).unwrap();
    let large = store_workload(2, 64, 40).unwrap();
    assert!(large.mean_hops >= small.mean_hops);
    assert!(large.mean_ms / small.mean_ms < 8.0);
}

#[test]
fn dimensionality_is_flat() {
    let one = dimension_workload(3, 16, 1, 100).unwrap();
    let six = dimension_workload(3, 16, 6, 100).unwrap();
    assert_eq!(one.failed + six.failed, 0);
    assert!(six.mean_ms / one.mean_ms < 3.0);
}

#[test]
fn same_seed_same_numbers() {
    let a = store_workload(5, 16, 10).unwrap();
    let b = store_workload(5, 16, 10).unwrap();
    assert_eq!(a.mean_ms, b.mean_ms);
    assert_eq!(a.mean_hops, b.mean_hops);
}
