//! Daemon and client for a single rendezvous point.

pub mod client;
pub mod config;
pub mod daemon;
pub mod executor;
pub mod net;
pub mod output;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NETWORK: i32 = 2;
pub const EXIT_CORRUPT: i32 = 3;
