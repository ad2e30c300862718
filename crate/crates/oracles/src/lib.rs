//! Slow, obviously-correct reference models for tests.
//!
//! Nothing here is used at runtime. Each oracle takes the direct route
//! (enumerate, scan, sort) so that disagreements point at the optimized
//! code.

pub mod baseline;
pub mod cells;
pub mod faults;
pub mod gen;
pub mod matcher;
pub mod rules;
pub mod store;
