//! `cargo bench -p rpmesh-core --bench mmq_throughput`

use rpmesh_oracles::baseline::compare;

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    println!("payload  records  mapped/s      baseline/s    ratio");
    for (payload, records) in [(64, 400_000), (1024, 100_000), (65536, 4_000)] {
        let t = compare(dir.path(), payload, records, 3).expect("benchmark run");
        println!(
            "{:>7}  {:>7}  {:>12.0}  {:>12.0}  {:>5.2}",
            t.payload,
            t.records,
            t.mapped_per_sec,
            t.baseline_per_sec,
            t.ratio()
        );
    }
}
