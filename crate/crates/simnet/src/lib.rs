//! Deterministic in-process harness for rendezvous-point clusters.
//!
//! Unmodified [`rpmesh_core::rp::RpNode`]s exchange real wire frames over a
//! virtual transport with seeded latency, loss and partitions. One
//! scheduler owns the clock; the same seed and script always produce the
//! same trace.

mod script;
mod sim;
pub mod trace;
pub mod workload;

pub use script::{parse_script, run_scenario, run_script, Command, ScenarioOutcome, Step};
pub use sim::{scaled_rp_config, Checkpoint, FunctionRun, Latency, OpRecord, PartitionChange, Sim, SimConfig, SimNode};
pub use trace::{measure, Metric, SimTrace, Summary, TraceEvent};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("script line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("node {0} is dead")]
    DeadNode(String),
    #[error("node {0} is already running")]
    DuplicateNode(String),
    #[error("node {0} has not joined the overlay")]
    NotJoined(String),
}
