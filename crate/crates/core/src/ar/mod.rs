//! Associative rendezvous: profiles, associative selection, the message
//! quintuplet and streaming sessions.

mod message;
mod profile;
mod stream;

pub use message::{content_digest, ARMessage, Action, FunctionRef, Header};
pub(crate) use message::hex;
pub use profile::{matches, Profile, ProfileError, Term, TermKind};
pub use stream::{stream_key, PushSession, StreamReceiver};
