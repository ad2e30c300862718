//! The rendezvous point: wire messages, stream queues and the node engine.

mod node;
pub mod proto;
pub mod queues;

pub use node::{format_notification, Counters, Input, NodeEvent, Output, Phase, RpConfig, RpNode, Storage, Timer};
pub use proto::{ClientCmd, ClientReply, Envelope, Member, Msg, Notification, OpId, Packet, Receipt, RingView, Role, RpResult, Work};
pub use queues::{DirQueues, MemQueues, StreamQueues};
