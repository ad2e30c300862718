use rpmesh_core::ar::{ARMessage, Action, Profile};
use rpmesh_core::geo::GeoPoint;
use rpmesh_simnet::{measure, Metric, Sim, SimConfig};

fn p(s: &str) -> Profile {
    Profile::parse(s).unwrap()
}

#[test]
fn single_node_round_trip() {
    let mut sim = Sim::new(SimConfig::new(1).with_nodes(1));
    sim.spawn_cluster().unwrap();
    let r = sim
        .post_and_wait("n0", ARMessage::new(p("sensor,temp"), Action::Store).with_data(b"21".to_vec()), 2000)
        .unwrap()
        .expect("receipt");
    assert!(r.is_ok(), "{r:?}");
    assert_eq!(r.master_hops, 0);
    let q = sim.query_and_wait("n0", p("sensor,*"), None, 2000).unwrap().unwrap();
    assert_eq!(q.entries().len(), 1);
    assert_eq!(measure(sim.trace(), Metric::Hops).max, 0.0);
}

#[test]
fn four_nodes_store_and_query() {
    let mut sim = Sim::new(SimConfig::new(2).with_nodes(4));
    sim.spawn_cluster().unwrap();
    let cp = sim.checkpoint();
    assert!(cp.is_ok(), "{:?}", cp.violations);
    assert_eq!(cp.masters.len(), 1);
    assert_eq!(cp.rings.values().next().unwrap().len(), 4);
    let r = sim
        .post_and_wait("n1", ARMessage::new(p("sensor,temp"), Action::Store).with_data(b"21".to_vec()), 2000)
        .unwrap()
        .expect("receipt");
    assert!(r.is_ok() && !r.degraded, "{r:?}");
    assert_eq!(r.rp_count(), 3);
    let q = sim.query_and_wait("n3", p("sensor,temp"), None, 2000).unwrap().unwrap();
    assert_eq!(q.entries().len(), 1);
    let all = sim.post_and_wait("n2", ARMessage::new(Profile::default(), Action::Statistics), 2000).unwrap().unwrap();
    assert_eq!(all.rp_count(), 4);
}

#[test]
fn same_seed_same_trace() {
    let run = |seed| {
        let mut sim = Sim::new(SimConfig::new(seed).with_nodes(6));
        sim.spawn_cluster().unwrap();
        sim.post_and_wait("n4", ARMessage::new(p("a,b"), Action::Store), 2000).unwrap();
        sim.trace().to_csv()
    };
    assert_eq!(run(9), run(9));
    assert_ne!(run(9), run(10));
}

#[test]
fn geo_split_places_nodes() {
    let mut cfg = SimConfig::new(3);
    cfg.rp.capacity = 8;
    cfg.rp.replicas = 2;
    let mut sim = Sim::new(cfg);
    // one point per quadrant of the root box
    let spots = [(45.0, -90.0), (45.0, 90.0), (-45.0, -90.0), (-45.0, 90.0)];
    let mut i = 0;
    for round in 0..3 {
        for (lat, lon) in spots {
            let g = GeoPoint::new(lat + round as f64, lon + round as f64).unwrap();
            sim.join(&format!("n{i}"), g).unwrap();
            i += 1;
            sim.run_for(30);
        }
    }
    let cp = sim.settle(3000);
    assert!(cp.is_ok(), "{:?}", cp.violations);
    assert_eq!(cp.masters.len(), 4, "{:?}", cp.rings);
    for names in cp.rings.values() {
        assert_eq!(names.len(), 3);
    }
}

fn quadrant_cluster(seed: u64) -> Sim {
    let mut cfg = SimConfig::new(seed);
    cfg.rp.capacity = 8;
    cfg.rp.replicas = 2;
    let mut sim = Sim::new(cfg);
    let spots = [(45.0, -90.0), (45.0, 90.0), (-45.0, -90.0), (-45.0, 90.0)];
    let mut i = 0;
    for round in 0..3 {
        for (lat, lon) in spots {
            let g = GeoPoint::new(lat + round as f64, lon + round as f64).unwrap();
            sim.join(&format!("n{i}"), g).unwrap();
            i += 1;
            sim.run_for(30);
        }
    }
    assert!(sim.settle(3000).is_ok());
    sim
}

#[test]
fn sibling_region_takes_two_master_hops() {
    let mut sim = quadrant_cluster(4);
    let target = GeoPoint::new(-44.0, 91.0).unwrap();
    for origin in ["n0", "n4", "n8"] {
        let msg = ARMessage::new(p("sensor,temp"), Action::Store).with_location(target);
        let r = sim.post_and_wait(origin, msg, 3000).unwrap().unwrap();
        assert!(r.is_ok(), "{r:?}");
        assert_eq!(r.master_hops, 2, "from {origin}");
        let op = r.op;
        let executed = &sim.op(&op).unwrap().executed_by;
        let region = sim.node("n3").unwrap().region().clone();
        for n in executed {
            assert_eq!(sim.node(n).unwrap().region(), &region);
        }
    }
    let local = ARMessage::new(p("x"), Action::Store).with_location(GeoPoint::new(46.0, -89.0).unwrap());
    assert_eq!(sim.post_and_wait("n4", local, 3000).unwrap().unwrap().master_hops, 0);
}

#[test]
fn master_failure_elects_one_master() {
    let mut sim = Sim::new(SimConfig::new(5).with_nodes(12));
    sim.spawn_cluster().unwrap();
    for i in 0..20 {
        let msg = ARMessage::new(p(&format!("item{i},v")), Action::Store).with_data(vec![i as u8]);
        assert!(sim.post_and_wait(&format!("n{}", i % 12), msg, 2000).unwrap().unwrap().is_ok());
    }
    let cp = sim.checkpoint();
    let master = cp.masters.values().next().unwrap().clone();
    let killed_at = sim.now();
    sim.kill(&master).unwrap();
    let cp = sim.settle(1000);
    assert!(cp.is_ok(), "{:?}", cp.violations);
    assert!(sim.now() - killed_at <= 1000);
    assert_ne!(cp.masters.values().next().unwrap(), &master);
    let asker = sim.live()[0].clone();
    for i in 0..20 {
        let q = sim.query_and_wait(&asker, p(&format!("item{i},v")), None, 2000).unwrap().unwrap();
        assert_eq!(q.entries().len(), 1, "item{i}: {q:?}");
    }
}
