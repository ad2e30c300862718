//! Field encodings of the AR message and its parts.

use super::{Fields, TlvWriter, WireError};
use crate::ar::{ARMessage, Action, FunctionRef, Header, Profile, Term, TermKind};
use crate::geo::GeoPoint;

mod tag {
    pub const TERM: u8 = 1;
    pub const PROFILE: u8 = 2;
    pub const CREDENTIALS: u8 = 3;
    pub const ACTION: u8 = 4;
    pub const DATA: u8 = 5;
    pub const LOCATION: u8 = 6;
    pub const TOPOLOGY: u8 = 7;
    pub const NAME: u8 = 8;
    pub const BLOB: u8 = 9;
    pub const RUNTIME: u8 = 10;
    pub const LAT: u8 = 11;
    pub const LON: u8 = 12;
}

fn bad(tag: u8, reason: impl Into<String>) -> WireError {
    WireError::BadField {
        tag,
        reason: reason.into(),
    }
}

fn kind_code(k: TermKind) -> u8 {
    match k {
        TermKind::Exact => 1,
        TermKind::Partial => 2,
        TermKind::Wildcard => 3,
        TermKind::Range => 4,
        TermKind::AttributeOnly => 5,
    }
}

pub fn encode_profile(p: &Profile) -> TlvWriter {
    let mut w = TlvWriter::new();
    for t in p.terms() {
        let text = t.to_string();
        let mut b = Vec::with_capacity(text.len() + 1);
        b.push(kind_code(t.kind()));
        b.extend_from_slice(text.as_bytes());
        w.bytes(tag::TERM, &b);
    }
    w
}

pub fn decode_profile(buf: &[u8]) -> Result<Profile, WireError> {
    let f = Fields::parse(buf)?;
    let mut terms = Vec::new();
    for raw in f.all(tag::TERM) {
        let (&kind, text) = raw.split_first().ok_or_else(|| bad(tag::TERM, "empty term"))?;
        let text = std::str::from_utf8(text).map_err(|_| bad(tag::TERM, "not utf-8"))?;
        let t = Term::parse(text).map_err(|e| bad(tag::TERM, e.to_string()))?;
        if kind_code(t.kind()) != kind {
            return Err(bad(tag::TERM, format!("kind byte {kind} disagrees with {text:?}")));
        }
        terms.push(t);
    }
    Ok(Profile::new(terms))
}

pub fn encode_geo(g: GeoPoint) -> TlvWriter {
    let mut w = TlvWriter::new();
    w.f64(tag::LAT, g.lat).f64(tag::LON, g.lon);
    w
}

pub fn decode_geo(buf: &[u8]) -> Result<GeoPoint, WireError> {
    let f = Fields::parse(buf)?;
    GeoPoint::new(f.f64(tag::LAT)?, f.f64(tag::LON)?).map_err(|e| bad(tag::LAT, e))
}

pub fn encode_function(fr: &FunctionRef) -> TlvWriter {
    let mut w = TlvWriter::new();
    w.str(tag::NAME, &fr.name)
        .bytes(tag::BLOB, &fr.blob)
        .str(tag::RUNTIME, &fr.runtime_tag);
    w
}

pub fn decode_function(buf: &[u8]) -> Result<FunctionRef, WireError> {
    let f = Fields::parse(buf)?;
    let name = f.str(tag::NAME)?;
    if name.is_empty() {
        return Err(bad(tag::NAME, "empty function name"));
    }
    Ok(FunctionRef::new(
        name,
        f.req(tag::BLOB)?.to_vec(),
        f.str(tag::RUNTIME)?,
    ))
}

pub fn encode_message(m: &ARMessage) -> TlvWriter {
    let mut w = TlvWriter::new();
    w.nested(tag::PROFILE, &encode_profile(&m.header.profile));
    if !m.header.credentials.is_empty() {
        w.bytes(tag::CREDENTIALS, &m.header.credentials);
    }
    w.u8(tag::ACTION, m.action.code());
    if !m.data.is_empty() {
        w.bytes(tag::DATA, &m.data);
    }
    if let Some(g) = m.location {
        w.nested(tag::LOCATION, &encode_geo(g));
    }
    if let Some(fr) = &m.topology {
        w.nested(tag::TOPOLOGY, &encode_function(fr));
    }
    w
}

pub fn decode_message(buf: &[u8]) -> Result<ARMessage, WireError> {
    let f = Fields::parse(buf)?;
    let code = f.u8(tag::ACTION)?;
    let action = Action::from_code(code).ok_or_else(|| bad(tag::ACTION, format!("unknown action {code}")))?;
    Ok(ARMessage {
        header: Header {
            profile: decode_profile(f.req(tag::PROFILE)?)?,
            credentials: f.get(tag::CREDENTIALS).unwrap_or_default().to_vec(),
        },
        action,
        data: f.get(tag::DATA).unwrap_or_default().to_vec(),
        location: f.get(tag::LOCATION).map(decode_geo).transpose()?,
        topology: f.get(tag::TOPOLOGY).map(decode_function).transpose()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn message_round_trip() {
        let m = ARMessage::new(Profile::parse("drone,li*,t:10..20,lat:*,x*,*").unwrap(), Action::NotifyData)
            .with_data(b"payload".to_vec())
            .with_location(GeoPoint::new(40.0583, -74.4056).unwrap())
            .with_credentials(b"token".to_vec())
            .with_topology(FunctionRef::new("post_processing_func", b"argv".to_vec(), "exec"));
        let bytes = encode_message(&m).finish();
        assert_eq!(decode_message(&bytes).unwrap(), m);
        let bare = ARMessage::new(Profile::default(), Action::Statistics);
        assert_eq!(decode_message(&encode_message(&bare).finish()).unwrap(), bare);
    }

    #[test]
    fn unknown_action_is_rejected() {
        let mut w = TlvWriter::new();
        w.nested(tag::PROFILE, &TlvWriter::new()).u8(tag::ACTION, 99);
        assert!(matches!(decode_message(&w.finish()), Err(WireError::BadField { .. })));
    }
}
