//! Workload drivers for scalability and routing-overhead runs. Each driver
//! builds a fresh single-region cluster, issues its operations one at a
//! time from seeded random origins and reports completion in virtual time.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rpmesh_core::ar::{ARMessage, Action, Profile};
use rpmesh_core::constants::SpaceConfig;

use crate::{Sim, SimConfig, ScenarioError};

/// Element payload size.
pub const PAYLOAD: usize = 1024;

const WAIT: u64 = 5_000;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Completion {
    pub ops: usize,
    /// Mean virtual milliseconds from issue to receipt.
    pub mean_ms: f64,
    /// Mean master plus lookup hops.
    pub mean_hops: f64,
    pub failed: usize,
}

impl Completion {
    fn from(samples: &[(u64, u32, bool)]) -> Self {
        let n = samples.len().max(1) as f64;
        Completion {
            ops: samples.len(),
            mean_ms: samples.iter().map(|s| s.0 as f64).sum::<f64>() / n,
            mean_hops: samples.iter().map(|s| s.1 as f64).sum::<f64>() / n,
            failed: samples.iter().filter(|s| !s.2).count(),
        }
    }
}

const LETTERS: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";

fn word(rng: &mut ChaCha8Rng) -> String {
    (0..6).map(|_| *LETTERS.choose(rng).expect("letters") as char).collect()
}

/// A simple profile of `terms` random words.
fn simple(rng: &mut ChaCha8Rng, terms: usize) -> Profile {
    let text: Vec<String> = (0..terms).map(|_| word(rng)).collect();
    Profile::parse(&text.join(",")).expect("simple profile")
}

fn element_profiles(rng: &mut ChaCha8Rng, n: usize) -> Vec<Profile> {
    let d = SpaceConfig::default().dimensions as usize;
    (0..n).map(|_| simple(rng, d)).collect()
}

fn cluster(seed: u64, nodes: usize, space: SpaceConfig) -> Result<(Sim, Vec<String>, ChaCha8Rng), ScenarioError> {
    let mut sim = Sim::new(SimConfig::new(seed).with_nodes(nodes).with_space(space));
    let names = sim.spawn_cluster()?;
    let rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_0a11);
    Ok((sim, names, rng))
}

fn run(sim: &mut Sim, origin: &str, msg: ARMessage) -> Result<(u64, u32, bool), ScenarioError> {
    let start = sim.now();
    let op = sim.post(origin, msg)?;
    let r = sim.await_op(&op, WAIT);
    let ok = r.as_ref().is_some_and(|r| r.is_ok() && !r.degraded);
    let hops = r.as_ref().map_or(0, |r| r.master_hops + r.lookup_hops);
    Ok((sim.now() - start, hops, ok))
}

/// Stores `elements` distinct elements.
pub fn store_workload(seed: u64, nodes: usize, elements: usize) -> Result<Completion, ScenarioError> {
    let (mut sim, names, mut rng) = cluster(seed, nodes, SpaceConfig::default())?;
    let items = element_profiles(&mut rng, elements);
    let mut samples = Vec::with_capacity(elements);
    for (i, p) in items.into_iter().enumerate() {
        let origin = names.choose(&mut rng).expect("nodes").clone();
        let msg = ARMessage::new(p, Action::Store).with_data(vec![i as u8; PAYLOAD]);
        samples.push(run(&mut sim, &origin, msg)?);
    }
    Ok(Completion::from(&samples))
}

/// Stores `elements` distinct elements, then queries each one exactly from
/// another random origin. Only the queries are reported.
pub fn exact_query_workload(seed: u64, nodes: usize, elements: usize) -> Result<Completion, ScenarioError> {
    let (mut sim, names, mut rng) = cluster(seed, nodes, SpaceConfig::default())?;
    let items = element_profiles(&mut rng, elements);
    for (i, p) in items.iter().enumerate() {
        let origin = names.choose(&mut rng).expect("nodes").clone();
        let msg = ARMessage::new(p.clone(), Action::Store).with_data(vec![i as u8; PAYLOAD]);
        run(&mut sim, &origin, msg)?;
    }
    let mut samples = Vec::with_capacity(elements);
    for p in items {
        let origin = names.choose(&mut rng).expect("nodes").clone();
        let start = sim.now();
        let op = sim.query(&origin, p, None)?;
        let r = sim.await_op(&op, WAIT);
        let ok = r.as_ref().is_some_and(|r| r.is_ok() && r.entries().len() == 1);
        let hops = r.as_ref().map_or(0, |r| r.master_hops + r.lookup_hops);
        samples.push((sim.now() - start, hops, ok));
    }
    Ok(Completion::from(&samples))
}

/// Stores `posts` simple profiles with `dims` terms in a `dims`-dimensional
/// keyword space.
pub fn dimension_workload(seed: u64, nodes: usize, dims: u32, posts: usize) -> Result<Completion, ScenarioError> {
    let space = SpaceConfig { dimensions: dims, order: 16 };
    let (mut sim, names, mut rng) = cluster(seed, nodes, space)?;
    let mut samples = Vec::with_capacity(posts);
    for _ in 0..posts {
        let profile = simple(&mut rng, dims as usize);
        let origin = names.choose(&mut rng).expect("nodes").clone();
        let msg = ARMessage::new(profile, Action::Store).with_data(vec![0; 64]);
        samples.push(run(&mut sim, &origin, msg)?);
    }
    Ok(Completion::from(&samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node_is_local_but_under_replicated() {
        let c = store_workload(1, 1, 3).unwrap();
        assert_eq!(c.ops, 3);
        // one copy of three: degraded
        assert_eq!(c.failed, 3);
        assert_eq!(c.mean_hops, 0.0);
    }
}
