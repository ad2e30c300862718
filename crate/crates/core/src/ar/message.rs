use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::geo::GeoPoint;

use super::Profile;

/// Reactive behavior requested at the rendezvous point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Store,
    Statistics,
    StoreFunction,
    StartFunction,
    StopFunction,
    NotifyInterest,
    NotifyData,
    Delete,
}

impl Action {
    pub const ALL: [Action; 8] = [
        Action::Store,
        Action::Statistics,
        Action::StoreFunction,
        Action::StartFunction,
        Action::StopFunction,
        Action::NotifyInterest,
        Action::NotifyData,
        Action::Delete,
    ];

    pub fn code(self) -> u8 {
        match self {
            Action::Store => 1,
            Action::Statistics => 2,
            Action::StoreFunction => 3,
            Action::StartFunction => 4,
            Action::StopFunction => 5,
            Action::NotifyInterest => 6,
            Action::NotifyData => 7,
            Action::Delete => 8,
        }
    }

    pub fn from_code(code: u8) -> Option<Action> {
        Action::ALL.into_iter().find(|a| a.code() == code)
    }

    /// Function actions operate on function profiles, the rest on
    /// resource profiles.
    pub fn is_function_action(self) -> bool {
        matches!(
            self,
            Action::StoreFunction | Action::StartFunction | Action::StopFunction
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Store => "store",
            Action::Statistics => "statistics",
            Action::StoreFunction => "store-function",
            Action::StartFunction => "start-function",
            Action::StopFunction => "stop-function",
            Action::NotifyInterest => "notify-interest",
            Action::NotifyData => "notify-data",
            Action::Delete => "delete",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        let norm = if norm == "stats" { "statistics".to_string() } else { norm };
        Action::ALL
            .into_iter()
            .find(|a| a.name() == norm)
            .ok_or_else(|| format!("unknown action {s:?}"))
    }
}

/// A stored analytics function.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FunctionRef {
    pub name: String,
    /// Executable payload or command descriptor.
    pub blob: Vec<u8>,
    pub runtime_tag: String,
}

impl FunctionRef {
    pub fn new(name: impl Into<String>, blob: Vec<u8>, runtime_tag: impl Into<String>) -> Self {
        FunctionRef {
            name: name.into(),
            blob,
            runtime_tag: runtime_tag.into(),
        }
    }

    /// SHA-256 of the blob, hex encoded.
    pub fn digest_hex(&self) -> String {
        hex(&Sha256::digest(&self.blob))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Header of an AR message: the semantic profile plus opaque sender
/// credentials (carried and logged, never checked).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Header {
    pub profile: Profile,
    pub credentials: Vec<u8>,
}

/// The message quintuplet exchanged between peers.
#[derive(Debug, Clone, PartialEq)]
pub struct ARMessage {
    pub header: Header,
    pub action: Action,
    pub data: Vec<u8>,
    pub location: Option<GeoPoint>,
    pub topology: Option<FunctionRef>,
}

impl ARMessage {
    pub fn new(profile: Profile, action: Action) -> Self {
        ARMessage {
            header: Header {
                profile,
                credentials: Vec::new(),
            },
            action,
            data: Vec::new(),
            location: None,
            topology: None,
        }
    }

    pub fn with_data(mut self, data: impl Into<Vec<u8>>) -> Self {
        self.data = data.into();
        self
    }

    pub fn with_location(mut self, location: GeoPoint) -> Self {
        self.location = Some(location);
        self
    }

    pub fn with_topology(mut self, f: FunctionRef) -> Self {
        self.topology = Some(f);
        self
    }

    pub fn with_credentials(mut self, c: impl Into<Vec<u8>>) -> Self {
        self.header.credentials = c.into();
        self
    }

    pub fn profile(&self) -> &Profile {
        &self.header.profile
    }

    /// Digest over the profile bytes followed by the data bytes.
    pub fn content_digest(&self) -> [u8; 32] {
        content_digest(&self.header.profile, &self.data)
    }

    /// Profile used when matching rendezvous registrations: the header
    /// profile plus `lat:`/`long:` terms derived from the location field.
    pub fn match_profile(&self) -> Profile {
        let mut p = self.header.profile.clone();
        if let Some(loc) = self.location {
            for t in loc.terms() {
                p.push(t);
            }
        }
        p
    }
}

pub fn content_digest(profile: &Profile, data: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(profile.canonical().as_bytes());
    h.update(data);
    h.finalize().into()
}
