//! Location-aware overlay: identifiers, per-region XOR rings, the
//! quadtree of regions, master election and responsibility.

pub mod election;
pub mod quadtree;
pub mod responsibility;
pub mod routing;

pub use election::{message_bound, Direction, Election, ElectionMsg};
pub use quadtree::{plan_split, LeafInfo, QuadTreeSnapshot, RegionPath};
pub use responsibility::{closest_members, responsible_for_index, responsible_for_target};
pub use routing::{Contact, Lookup, RoutingTable};
