//! Regenerates `golden/hilbert_vectors.txt`.
//!
//! cargo run -p rpmesh-core --example hilbert_golden > crates/core/golden/hilbert_vectors.txt

use rpmesh_core::constants::ORIENTATION;
use rpmesh_core::sfc::{hilbert_encode, KeywordSpacePoint};

fn main() {
    println!("# Hilbert golden vectors, format v1");
    println!("# orientation: {ORIENTATION}");
    println!("# line: d=<dims> b=<order> (<axis0>,<axis1>,...) -> <index>");
    for dims in [2u32, 3] {
        for order in 1..=4u32 {
            let side = 1u64 << order;
            let total = side.pow(dims);
            for n in 0..total {
                let mut rest = n;
                let mut coords = Vec::with_capacity(dims as usize);
                for _ in 0..dims {
                    coords.push(rest % side);
                    rest /= side;
                }
                coords.reverse();
                let p = KeywordSpacePoint::new(coords.clone(), order).unwrap();
                let text: Vec<String> = coords.iter().map(u64::to_string).collect();
                println!(
                    "d={dims} b={order} ({}) -> {}",
                    text.join(","),
                    hilbert_encode(&p).0
                );
            }
        }
    }
}
