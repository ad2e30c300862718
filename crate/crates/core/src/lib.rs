//! Rendezvous-point mesh for edge data pipelines.
//!
//! Profiles of keywords are mapped onto a Hilbert-curve index space and
//! routed over a location-aware quadtree of XOR rings. Rendezvous points
//! match producer and consumer profiles, store replicated data, queue
//! streamed records in memory-mapped logs and trigger stored functions from
//! content rules.

pub mod ar;
pub mod constants;
pub mod geo;
pub mod id;
pub mod mmq;
pub mod overlay;
pub mod rp;
pub mod rules;
pub mod sfc;
pub mod store;
pub mod wire;

pub use constants::SpaceConfig;
