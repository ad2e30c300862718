//! Protocol messages carried in frames, and their field encodings.

use std::fmt;

use crate::ar::{ARMessage, Action, Profile};
use crate::geo::GeoPoint;
use crate::id::{Endpoint, NodeId};
use crate::overlay::{Contact, Direction, LeafInfo, QuadTreeSnapshot, RegionPath};
use crate::wire::codec::{decode_geo, decode_message, decode_profile, encode_geo, encode_message, encode_profile};
use crate::wire::{Fields, Frame, FrameType, TlvWriter, WireError};

mod tag {
    pub const FROM_EP: u8 = 1;
    pub const FROM_ID: u8 = 2;
    pub const GEO: u8 = 3;
    pub const QID: u8 = 4;
    pub const TARGET: u8 = 5;
    pub const CONTACT: u8 = 6;
    pub const OUTCOME: u8 = 7;
    pub const REDIRECT: u8 = 8;
    pub const RING: u8 = 9;
    pub const TREE: u8 = 10;
    pub const SEQ: u8 = 11;
    pub const MASTER: u8 = 12;
    pub const MASTER_EP: u8 = 13;
    pub const VERSION: u8 = 14;
    pub const REGION: u8 = 15;
    pub const EPOCH: u8 = 16;
    pub const EXCLUDED: u8 = 17;
    pub const CANDIDATE: u8 = 18;
    pub const PHASE: u8 = 19;
    pub const HOPS: u8 = 20;
    pub const DIR: u8 = 21;
    pub const KIND: u8 = 23;
    pub const OP_ORIGIN: u8 = 24;
    pub const OP_SEQ: u8 = 25;
    pub const MESSAGE: u8 = 26;
    pub const ORIGIN_EP: u8 = 27;
    pub const MASTER_HOPS: u8 = 30;
    pub const RESULT: u8 = 31;
    pub const RECEIPT: u8 = 32;
    pub const STREAM: u8 = 34;
    pub const PRODUCER: u8 = 35;
    pub const RECORD: u8 = 36;
    pub const CONSUMER: u8 = 38;
    pub const MAX: u8 = 39;
    pub const OFFSET: u8 = 41;
    pub const MEMBER: u8 = 42;
    pub const LEAF: u8 = 43;
    pub const RING_SIZE: u8 = 45;
    pub const ENTRY: u8 = 46;
    pub const PROFILE: u8 = 47;
    pub const DATA: u8 = 48;
    pub const STATS: u8 = 49;
    pub const STARTED: u8 = 50;
    pub const ERROR: u8 = 51;
    pub const COUNT: u8 = 52;
    pub const DUPLICATE: u8 = 53;
    pub const DEGRADED: u8 = 54;
    pub const MISSING: u8 = 55;
    pub const LEADER: u8 = 56;
    pub const ROLE: u8 = 57;
    pub const COUNTERPART: u8 = 58;
    pub const RP: u8 = 59;
    pub const REQ: u8 = 60;
    pub const TEXT: u8 = 62;
    pub const IS_MEMBER: u8 = 63;
    pub const PEER: u8 = 64;
    pub const REPLICA: u8 = 65;
    pub const LOOKUP_HOPS: u8 = 66;
    pub const SUB: u8 = 67;
    pub const COORD_EP: u8 = 68;
    pub const LEAF_EPOCH: u8 = 69;
    pub const LOCATION: u8 = 71;
    pub const REGISTRANT: u8 = 72;
    pub const REGISTRANT_ID: u8 = 73;
    pub const ACTION: u8 = 74;
    pub const NEXT: u8 = 75;
}

fn bad(tag: u8, reason: impl Into<String>) -> WireError {
    WireError::BadField {
        tag,
        reason: reason.into(),
    }
}

fn flag(w: &mut TlvWriter, t: u8, v: bool) {
    if v {
        w.u8(t, 1);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub id: NodeId,
    pub endpoint: Endpoint,
    pub geo: GeoPoint,
}

impl Member {
    pub fn contact(&self) -> Contact {
        Contact::new(self.id, self.endpoint.clone())
    }
}

fn enc_member(m: &Member) -> TlvWriter {
    let mut w = TlvWriter::new();
    w.id(tag::FROM_ID, &m.id)
        .str(tag::FROM_EP, &m.endpoint)
        .nested(tag::GEO, &encode_geo(m.geo));
    w
}

fn dec_member(b: &[u8]) -> Result<Member, WireError> {
    let f = Fields::parse(b)?;
    Ok(Member {
        id: f.id(tag::FROM_ID)?,
        endpoint: f.str(tag::FROM_EP)?.to_string(),
        geo: decode_geo(f.req(tag::GEO)?)?,
    })
}

fn enc_contact(c: &Contact) -> TlvWriter {
    let mut w = TlvWriter::new();
    w.id(tag::FROM_ID, &c.id).str(tag::FROM_EP, &c.endpoint);
    w
}

fn dec_contact(b: &[u8]) -> Result<Contact, WireError> {
    let f = Fields::parse(b)?;
    Ok(Contact::new(f.id(tag::FROM_ID)?, f.str(tag::FROM_EP)?))
}

fn path(f: &Fields<'_>, t: u8) -> Result<RegionPath, WireError> {
    RegionPath::parse(f.str(t)?).ok_or_else(|| bad(t, "bad region path"))
}

/// Membership of one ring as published by its master.
#[derive(Debug, Clone, PartialEq)]
pub struct RingView {
    pub region: RegionPath,
    pub version: u64,
    pub master: NodeId,
    pub members: Vec<Member>,
}

fn enc_ring(r: &RingView) -> TlvWriter {
    let mut w = TlvWriter::new();
    w.str(tag::REGION, r.region.as_str())
        .u64(tag::VERSION, r.version)
        .id(tag::MASTER, &r.master);
    for m in &r.members {
        w.nested(tag::MEMBER, &enc_member(m));
    }
    w
}

fn dec_ring(b: &[u8]) -> Result<RingView, WireError> {
    let f = Fields::parse(b)?;
    Ok(RingView {
        region: path(&f, tag::REGION)?,
        version: f.u64(tag::VERSION)?,
        master: f.id(tag::MASTER)?,
        members: f.all(tag::MEMBER).map(dec_member).collect::<Result<_, _>>()?,
    })
}

fn enc_tree(t: &QuadTreeSnapshot) -> TlvWriter {
    let mut w = TlvWriter::new();
    w.u64(tag::VERSION, t.version);
    for (p, info) in t.leaves() {
        let mut l = TlvWriter::new();
        l.str(tag::REGION, p.as_str())
            .id(tag::MASTER, &info.master)
            .str(tag::MASTER_EP, &info.master_endpoint)
            .u32(tag::RING_SIZE, info.ring_size)
            .u64(tag::LEAF_EPOCH, info.epoch);
        w.nested(tag::LEAF, &l);
    }
    w
}

fn dec_tree(b: &[u8]) -> Result<QuadTreeSnapshot, WireError> {
    let f = Fields::parse(b)?;
    let mut leaves = std::collections::BTreeMap::new();
    for raw in f.all(tag::LEAF) {
        let l = Fields::parse(raw)?;
        leaves.insert(
            path(&l, tag::REGION)?,
            LeafInfo {
                master: l.id(tag::MASTER)?,
                master_endpoint: l.str(tag::MASTER_EP)?.to_string(),
                ring_size: l.u32(tag::RING_SIZE)?,
                epoch: l.u64(tag::LEAF_EPOCH)?,
            },
        );
    }
    Ok(QuadTreeSnapshot::from_leaves(f.u64(tag::VERSION)?, leaves))
}

/// Globally unique operation id: originating node plus a local counter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OpId {
    pub origin: NodeId,
    pub seq: u64,
}

impl fmt::Display for OpId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.origin.short(), self.seq)
    }
}

fn enc_op(w: &mut TlvWriter, op: &OpId) {
    w.id(tag::OP_ORIGIN, &op.origin).u64(tag::OP_SEQ, op.seq);
}

fn dec_op(f: &Fields<'_>) -> Result<OpId, WireError> {
    Ok(OpId {
        origin: f.id(tag::OP_ORIGIN)?,
        seq: f.u64(tag::OP_SEQ)?,
    })
}

/// What an operation asks the responsible points to do.
#[derive(Debug, Clone, PartialEq)]
pub enum Work {
    Post(ARMessage),
    Query {
        profile: Profile,
        location: Option<GeoPoint>,
    },
}

impl Work {
    pub fn profile(&self) -> &Profile {
        match self {
            Work::Post(m) => m.profile(),
            Work::Query { profile, .. } => profile,
        }
    }

    pub fn location(&self) -> Option<GeoPoint> {
        match self {
            Work::Post(m) => m.location,
            Work::Query { location, .. } => *location,
        }
    }

    pub fn action(&self) -> Option<Action> {
        match self {
            Work::Post(m) => Some(m.action),
            Work::Query { .. } => None,
        }
    }
}

fn enc_work(w: &mut TlvWriter, work: &Work) {
    match work {
        Work::Post(m) => {
            w.nested(tag::MESSAGE, &encode_message(m));
        }
        Work::Query { profile, location } => {
            w.nested(tag::PROFILE, &encode_profile(profile));
            if let Some(g) = location {
                w.nested(tag::LOCATION, &encode_geo(*g));
            }
        }
    }
}

fn dec_work(f: &Fields<'_>) -> Result<Work, WireError> {
    if let Some(m) = f.get(tag::MESSAGE) {
        return Ok(Work::Post(decode_message(m)?));
    }
    Ok(Work::Query {
        profile: decode_profile(f.req(tag::PROFILE)?)?,
        location: f.get(tag::LOCATION).map(decode_geo).transpose()?,
    })
}

/// Outcome at one rendezvous point.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RpResult {
    pub rp: NodeId,
    pub endpoint: Endpoint,
    pub entries: Vec<(Profile, Vec<u8>)>,
    pub stats: Option<String>,
    pub started: u32,
    pub count: u64,
    pub duplicate: bool,
    pub error: Option<String>,
}

fn enc_result(r: &RpResult) -> TlvWriter {
    let mut w = TlvWriter::new();
    w.id(tag::RP, &r.rp).str(tag::FROM_EP, &r.endpoint);
    for (p, d) in &r.entries {
        let mut e = TlvWriter::new();
        e.nested(tag::PROFILE, &encode_profile(p)).bytes(tag::DATA, d);
        w.nested(tag::ENTRY, &e);
    }
    if let Some(s) = &r.stats {
        w.str(tag::STATS, s);
    }
    w.u32(tag::STARTED, r.started).u64(tag::COUNT, r.count);
    flag(&mut w, tag::DUPLICATE, r.duplicate);
    if let Some(e) = &r.error {
        w.str(tag::ERROR, e);
    }
    w
}

fn dec_result(b: &[u8]) -> Result<RpResult, WireError> {
    let f = Fields::parse(b)?;
    let mut entries = Vec::new();
    for raw in f.all(tag::ENTRY) {
        let e = Fields::parse(raw)?;
        entries.push((decode_profile(e.req(tag::PROFILE)?)?, e.req(tag::DATA)?.to_vec()));
    }
    Ok(RpResult {
        rp: f.id(tag::RP)?,
        endpoint: f.str(tag::FROM_EP)?.to_string(),
        entries,
        stats: f.opt_str(tag::STATS)?.map(str::to_string),
        started: f.u32(tag::STARTED)?,
        count: f.u64(tag::COUNT)?,
        duplicate: f.flag(tag::DUPLICATE),
        error: f.opt_str(tag::ERROR)?.map(str::to_string),
    })
}

/// Final report of an operation, returned to its originator.
#[derive(Debug, Clone, PartialEq)]
pub struct Receipt {
    pub op: OpId,
    pub action: Option<Action>,
    pub results: Vec<RpResult>,
    pub missing: Vec<NodeId>,
    pub degraded: bool,
    pub error: Option<String>,
    pub master_hops: u32,
    pub lookup_hops: u32,
}

impl Receipt {
    pub fn rp_count(&self) -> usize {
        self.results.len()
    }

    pub fn rps(&self) -> Vec<NodeId> {
        self.results.iter().map(|r| r.rp).collect()
    }

    /// Returned entries with duplicates across replicas removed.
    pub fn entries(&self) -> Vec<(Profile, Vec<u8>)> {
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::new();
        for r in &self.results {
            for (p, d) in &r.entries {
                if seen.insert(crate::ar::content_digest(p, d)) {
                    out.push((p.clone(), d.clone()));
                }
            }
        }
        out
    }

    pub fn started(&self) -> u32 {
        self.results.iter().map(|r| r.started).sum()
    }

    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

fn enc_receipt(r: &Receipt) -> TlvWriter {
    let mut w = TlvWriter::new();
    enc_op(&mut w, &r.op);
    if let Some(a) = r.action {
        w.u8(tag::ACTION, a.code());
    }
    for x in &r.results {
        w.nested(tag::RESULT, &enc_result(x));
    }
    for m in &r.missing {
        w.id(tag::MISSING, m);
    }
    flag(&mut w, tag::DEGRADED, r.degraded);
    if let Some(e) = &r.error {
        w.str(tag::ERROR, e);
    }
    w.u32(tag::MASTER_HOPS, r.master_hops)
        .u32(tag::LOOKUP_HOPS, r.lookup_hops);
    w
}

fn dec_receipt(b: &[u8]) -> Result<Receipt, WireError> {
    let f = Fields::parse(b)?;
    let action = match f.get(tag::ACTION) {
        Some(_) => Some(Action::from_code(f.u8(tag::ACTION)?).ok_or_else(|| bad(tag::ACTION, "unknown action"))?),
        None => None,
    };
    Ok(Receipt {
        op: dec_op(&f)?,
        action,
        results: f.all(tag::RESULT).map(dec_result).collect::<Result<_, _>>()?,
        missing: f
            .all(tag::MISSING)
            .map(|b| NodeId::from_slice(b).ok_or_else(|| bad(tag::MISSING, "id length")))
            .collect::<Result<_, _>>()?,
        degraded: f.flag(tag::DEGRADED),
        error: f.opt_str(tag::ERROR)?.map(str::to_string),
        master_hops: f.u32(tag::MASTER_HOPS)?,
        lookup_hops: f.u32(tag::LOOKUP_HOPS)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    /// Registered interest in finding consumers for its data.
    Producer,
    Consumer,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Notification {
    /// A producer and a consumer profile met at `rp`.
    Rendezvous {
        role: Role,
        counterpart: Endpoint,
        counterpart_profile: Profile,
        own_profile: Profile,
        rp: NodeId,
    },
    /// Stored data matching a standing subscription.
    Data {
        subscription: Profile,
        profile: Profile,
        data: Vec<u8>,
        rp: NodeId,
    },
}

fn enc_notification(n: &Notification) -> TlvWriter {
    let mut w = TlvWriter::new();
    match n {
        Notification::Rendezvous {
            role,
            counterpart,
            counterpart_profile,
            own_profile,
            rp,
        } => {
            w.u8(tag::KIND, 1)
                .u8(tag::ROLE, matches!(role, Role::Consumer) as u8)
                .str(tag::COUNTERPART, counterpart)
                .nested(tag::PROFILE, &encode_profile(counterpart_profile))
                .nested(tag::SUB, &encode_profile(own_profile))
                .id(tag::RP, rp);
        }
        Notification::Data {
            subscription,
            profile,
            data,
            rp,
        } => {
            w.u8(tag::KIND, 2)
                .nested(tag::SUB, &encode_profile(subscription))
                .nested(tag::PROFILE, &encode_profile(profile))
                .bytes(tag::DATA, data)
                .id(tag::RP, rp);
        }
    }
    w
}

fn dec_notification(b: &[u8]) -> Result<Notification, WireError> {
    let f = Fields::parse(b)?;
    match f.u8(tag::KIND)? {
        1 => Ok(Notification::Rendezvous {
            role: if f.u8(tag::ROLE)? == 1 { Role::Consumer } else { Role::Producer },
            counterpart: f.str(tag::COUNTERPART)?.to_string(),
            counterpart_profile: decode_profile(f.req(tag::PROFILE)?)?,
            own_profile: decode_profile(f.req(tag::SUB)?)?,
            rp: f.id(tag::RP)?,
        }),
        2 => Ok(Notification::Data {
            subscription: decode_profile(f.req(tag::SUB)?)?,
            profile: decode_profile(f.req(tag::PROFILE)?)?,
            data: f.req(tag::DATA)?.to_vec(),
            rp: f.id(tag::RP)?,
        }),
        k => Err(bad(tag::KIND, format!("notification kind {k}"))),
    }
}

/// Requests a client (the command line tool) sends to its daemon.
#[derive(Debug, Clone, PartialEq)]
pub enum ClientCmd {
    Post(ARMessage),
    Query {
        profile: Profile,
        location: Option<GeoPoint>,
    },
    /// Status of the daemon itself.
    Status,
    Push {
        peer: Endpoint,
        profile: Profile,
        records: Vec<Vec<u8>>,
    },
    /// Reads from the local queue, or from `peer`'s when given.
    Pull {
        peer: Option<Endpoint>,
        profile: Profile,
        consumer: String,
        max: u32,
    },
    /// Notifications received since the given sequence number.
    Notifications { since: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClientReply {
    Receipt(Receipt),
    Records { records: Vec<(u64, Vec<u8>)>, next: u64 },
    Lines(Vec<String>),
    Error(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Envelope {
    /// Travelling between masters toward the destination region.
    Route {
        op: OpId,
        origin: Endpoint,
        work: Work,
        master_hops: u32,
        tree: Option<QuadTreeSnapshot>,
    },
    /// Execute at a responsible point.
    Deliver {
        op: OpId,
        coordinator: Endpoint,
        registrant: Endpoint,
        registrant_id: NodeId,
        work: Work,
        leader: NodeId,
        replica: bool,
    },
    DeliverAck { op: OpId, result: RpResult },
    Done(Receipt),
    Notify(Notification),
    Request { req: u64, cmd: ClientCmd },
    Reply { req: u64, reply: ClientReply },
}

fn enc_records(w: &mut TlvWriter, records: &[Vec<u8>]) {
    for r in records {
        w.bytes(tag::RECORD, r);
    }
}

fn dec_records(f: &Fields<'_>) -> Vec<Vec<u8>> {
    f.all(tag::RECORD).map(<[u8]>::to_vec).collect()
}

fn enc_cmd(w: &mut TlvWriter, cmd: &ClientCmd) {
    match cmd {
        ClientCmd::Post(m) => {
            w.u8(tag::KIND, 1).nested(tag::MESSAGE, &encode_message(m));
        }
        ClientCmd::Query { profile, location } => {
            w.u8(tag::KIND, 2).nested(tag::PROFILE, &encode_profile(profile));
            if let Some(g) = location {
                w.nested(tag::LOCATION, &encode_geo(*g));
            }
        }
        ClientCmd::Status => {
            w.u8(tag::KIND, 3);
        }
        ClientCmd::Push { peer, profile, records } => {
            w.u8(tag::KIND, 4)
                .str(tag::PEER, peer)
                .nested(tag::PROFILE, &encode_profile(profile));
            enc_records(w, records);
        }
        ClientCmd::Pull {
            peer,
            profile,
            consumer,
            max,
        } => {
            if let Some(p) = peer {
                w.str(tag::PEER, p);
            }
            w.u8(tag::KIND, 5)
                .nested(tag::PROFILE, &encode_profile(profile))
                .str(tag::CONSUMER, consumer)
                .u32(tag::MAX, *max);
        }
        ClientCmd::Notifications { since } => {
            w.u8(tag::KIND, 6).u64(tag::SEQ, *since);
        }
    }
}

fn dec_cmd(f: &Fields<'_>) -> Result<ClientCmd, WireError> {
    Ok(match f.u8(tag::KIND)? {
        1 => ClientCmd::Post(decode_message(f.req(tag::MESSAGE)?)?),
        2 => ClientCmd::Query {
            profile: decode_profile(f.req(tag::PROFILE)?)?,
            location: f.get(tag::LOCATION).map(decode_geo).transpose()?,
        },
        3 => ClientCmd::Status,
        4 => ClientCmd::Push {
            peer: f.str(tag::PEER)?.to_string(),
            profile: decode_profile(f.req(tag::PROFILE)?)?,
            records: dec_records(f),
        },
        5 => ClientCmd::Pull {
            peer: f.opt_str(tag::PEER)?.map(str::to_string),
            profile: decode_profile(f.req(tag::PROFILE)?)?,
            consumer: f.str(tag::CONSUMER)?.to_string(),
            max: f.u32(tag::MAX)?,
        },
        6 => ClientCmd::Notifications { since: f.u64(tag::SEQ)? },
        k => return Err(bad(tag::KIND, format!("command kind {k}"))),
    })
}

fn enc_reply(w: &mut TlvWriter, r: &ClientReply) {
    match r {
        ClientReply::Receipt(x) => {
            w.u8(tag::KIND, 1).nested(tag::RECEIPT, &enc_receipt(x));
        }
        ClientReply::Records { records, next } => {
            w.u8(tag::KIND, 2).u64(tag::NEXT, *next);
            for (off, p) in records {
                let mut e = TlvWriter::new();
                e.u64(tag::OFFSET, *off).bytes(tag::DATA, p);
                w.nested(tag::ENTRY, &e);
            }
        }
        ClientReply::Lines(lines) => {
            w.u8(tag::KIND, 3);
            for l in lines {
                w.str(tag::TEXT, l);
            }
        }
        ClientReply::Error(e) => {
            w.u8(tag::KIND, 4).str(tag::ERROR, e);
        }
    }
}

fn dec_reply(f: &Fields<'_>) -> Result<ClientReply, WireError> {
    Ok(match f.u8(tag::KIND)? {
        1 => ClientReply::Receipt(dec_receipt(f.req(tag::RECEIPT)?)?),
        2 => {
            let mut records = Vec::new();
            for raw in f.all(tag::ENTRY) {
                let e = Fields::parse(raw)?;
                records.push((e.u64(tag::OFFSET)?, e.req(tag::DATA)?.to_vec()));
            }
            ClientReply::Records {
                records,
                next: f.u64(tag::NEXT)?,
            }
        }
        3 => ClientReply::Lines(
            f.all(tag::TEXT)
                .map(|b| String::from_utf8_lossy(b).into_owned())
                .collect(),
        ),
        4 => ClientReply::Error(f.str(tag::ERROR)?.to_string()),
        k => return Err(bad(tag::KIND, format!("reply kind {k}"))),
    })
}

fn enc_envelope(w: &mut TlvWriter, e: &Envelope) {
    match e {
        Envelope::Route {
            op,
            origin,
            work,
            master_hops,
            tree,
        } => {
            w.u8(tag::KIND, 1);
            enc_op(w, op);
            w.str(tag::ORIGIN_EP, origin).u32(tag::MASTER_HOPS, *master_hops);
            enc_work(w, work);
            if let Some(t) = tree {
                w.nested(tag::TREE, &enc_tree(t));
            }
        }
        Envelope::Deliver {
            op,
            coordinator,
            registrant,
            registrant_id,
            work,
            leader,
            replica,
        } => {
            w.u8(tag::KIND, 2);
            enc_op(w, op);
            w.str(tag::COORD_EP, coordinator)
                .str(tag::REGISTRANT, registrant)
                .id(tag::REGISTRANT_ID, registrant_id)
                .id(tag::LEADER, leader);
            flag(w, tag::REPLICA, *replica);
            enc_work(w, work);
        }
        Envelope::DeliverAck { op, result } => {
            w.u8(tag::KIND, 3);
            enc_op(w, op);
            w.nested(tag::RESULT, &enc_result(result));
        }
        Envelope::Done(r) => {
            w.u8(tag::KIND, 4).nested(tag::RECEIPT, &enc_receipt(r));
        }
        Envelope::Notify(n) => {
            w.u8(tag::KIND, 5).nested(tag::SUB, &enc_notification(n));
        }
        Envelope::Request { req, cmd } => {
            let mut c = TlvWriter::new();
            enc_cmd(&mut c, cmd);
            w.u8(tag::KIND, 6).u64(tag::REQ, *req).nested(tag::MESSAGE, &c);
        }
        Envelope::Reply { req, reply } => {
            let mut c = TlvWriter::new();
            enc_reply(&mut c, reply);
            w.u8(tag::KIND, 7).u64(tag::REQ, *req).nested(tag::MESSAGE, &c);
        }
    }
}

fn dec_envelope(f: &Fields<'_>) -> Result<Envelope, WireError> {
    Ok(match f.u8(tag::KIND)? {
        1 => Envelope::Route {
            op: dec_op(f)?,
            origin: f.str(tag::ORIGIN_EP)?.to_string(),
            work: dec_work(f)?,
            master_hops: f.u32(tag::MASTER_HOPS)?,
            tree: f.get(tag::TREE).map(dec_tree).transpose()?,
        },
        2 => Envelope::Deliver {
            op: dec_op(f)?,
            coordinator: f.str(tag::COORD_EP)?.to_string(),
            registrant: f.str(tag::REGISTRANT)?.to_string(),
            registrant_id: f.id(tag::REGISTRANT_ID)?,
            work: dec_work(f)?,
            leader: f.id(tag::LEADER)?,
            replica: f.flag(tag::REPLICA),
        },
        3 => Envelope::DeliverAck {
            op: dec_op(f)?,
            result: dec_result(f.req(tag::RESULT)?)?,
        },
        4 => Envelope::Done(dec_receipt(f.req(tag::RECEIPT)?)?),
        5 => Envelope::Notify(dec_notification(f.req(tag::SUB)?)?),
        6 => Envelope::Request {
            req: f.u64(tag::REQ)?,
            cmd: dec_cmd(&Fields::parse(f.req(tag::MESSAGE)?)?)?,
        },
        7 => Envelope::Reply {
            req: f.u64(tag::REQ)?,
            reply: dec_reply(&Fields::parse(f.req(tag::MESSAGE)?)?)?,
        },
        k => return Err(bad(tag::KIND, format!("envelope kind {k}"))),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum JoinOutcome {
    Accepted,
    Redirect(Endpoint),
    DuplicateId,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Msg {
    Join { geo: GeoPoint },
    JoinAck {
        outcome: JoinOutcome,
        ring: Option<RingView>,
        tree: Option<QuadTreeSnapshot>,
    },
    Ping { seq: u64 },
    Pong {
        seq: u64,
        master: NodeId,
        master_endpoint: Endpoint,
        region: RegionPath,
        ring_version: u64,
        member: bool,
    },
    Lookup { qid: u64, target: NodeId },
    LookupAck { qid: u64, contacts: Vec<Contact> },
    ElectProbe {
        epoch: u64,
        excluded: NodeId,
        candidate: NodeId,
        phase: u32,
        hops: u32,
        dir: Direction,
    },
    ElectReply {
        epoch: u64,
        excluded: NodeId,
        candidate: NodeId,
        phase: u32,
        dir: Direction,
    },
    ElectWin { epoch: u64, excluded: NodeId },
    Snapshot {
        tree: Option<QuadTreeSnapshot>,
        ring: Option<RingView>,
    },
    Forward(Envelope),
    Store(Envelope),
    StoreAck(Envelope),
    Push {
        stream: String,
        producer: String,
        seq: u64,
        records: Vec<Vec<u8>>,
    },
    PushAck {
        stream: String,
        producer: String,
        next: u64,
    },
    Pull {
        req: u64,
        profile: Profile,
        consumer: String,
        max: u32,
    },
    PullReply {
        req: u64,
        records: Vec<(u64, Vec<u8>)>,
        next: u64,
        error: Option<String>,
    },
}

/// A message with the sender's identity, as carried in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub from: Contact,
    pub msg: Msg,
}

impl Msg {
    pub fn frame_type(&self) -> FrameType {
        match self {
            Msg::Join { .. } => FrameType::Join,
            Msg::JoinAck { .. } => FrameType::JoinAck,
            Msg::Ping { .. } => FrameType::Ping,
            Msg::Pong { .. } => FrameType::Pong,
            Msg::Lookup { .. } => FrameType::Lookup,
            Msg::LookupAck { .. } => FrameType::LookupAck,
            Msg::ElectProbe { .. } => FrameType::ElectProbe,
            Msg::ElectReply { .. } => FrameType::ElectReply,
            Msg::ElectWin { .. } => FrameType::ElectWin,
            Msg::Snapshot { .. } => FrameType::Snapshot,
            Msg::Forward(_) => FrameType::Forward,
            Msg::Store(_) => FrameType::Store,
            Msg::StoreAck(_) => FrameType::StoreAck,
            Msg::Push { .. } | Msg::PushAck { .. } => FrameType::Push,
            Msg::Pull { .. } | Msg::PullReply { .. } => FrameType::Pull,
        }
    }
}

const REPLY: u8 = 2;

impl Packet {
    pub fn new(from: Contact, msg: Msg) -> Self {
        Packet { from, msg }
    }

    pub fn to_frame(&self) -> Frame {
        let mut w = TlvWriter::new();
        w.str(tag::FROM_EP, &self.from.endpoint)
            .id(tag::FROM_ID, &self.from.id);
        match &self.msg {
            Msg::Join { geo } => {
                w.nested(tag::GEO, &encode_geo(*geo));
            }
            Msg::JoinAck { outcome, ring, tree } => {
                match outcome {
                    JoinOutcome::Accepted => w.u8(tag::OUTCOME, 0),
                    JoinOutcome::Redirect(e) => w.u8(tag::OUTCOME, 1).str(tag::REDIRECT, e),
                    JoinOutcome::DuplicateId => w.u8(tag::OUTCOME, 2),
                };
                if let Some(r) = ring {
                    w.nested(tag::RING, &enc_ring(r));
                }
                if let Some(t) = tree {
                    w.nested(tag::TREE, &enc_tree(t));
                }
            }
            Msg::Ping { seq } => {
                w.u64(tag::SEQ, *seq);
            }
            Msg::Pong {
                seq,
                master,
                master_endpoint,
                region,
                ring_version,
                member,
            } => {
                w.u64(tag::SEQ, *seq)
                    .id(tag::MASTER, master)
                    .str(tag::MASTER_EP, master_endpoint)
                    .str(tag::REGION, region.as_str())
                    .u64(tag::VERSION, *ring_version);
                flag(&mut w, tag::IS_MEMBER, *member);
            }
            Msg::Lookup { qid, target } => {
                w.u64(tag::QID, *qid).id(tag::TARGET, target);
            }
            Msg::LookupAck { qid, contacts } => {
                w.u64(tag::QID, *qid);
                for c in contacts {
                    w.nested(tag::CONTACT, &enc_contact(c));
                }
            }
            Msg::ElectProbe {
                epoch,
                excluded,
                candidate,
                phase,
                hops,
                dir,
            } => {
                w.u64(tag::EPOCH, *epoch)
                    .id(tag::EXCLUDED, excluded)
                    .id(tag::CANDIDATE, candidate)
                    .u32(tag::PHASE, *phase)
                    .u32(tag::HOPS, *hops)
                    .u8(tag::DIR, dir.code());
            }
            Msg::ElectReply {
                epoch,
                excluded,
                candidate,
                phase,
                dir,
            } => {
                w.u64(tag::EPOCH, *epoch)
                    .id(tag::EXCLUDED, excluded)
                    .id(tag::CANDIDATE, candidate)
                    .u32(tag::PHASE, *phase)
                    .u8(tag::DIR, dir.code());
            }
            Msg::ElectWin { epoch, excluded } => {
                w.u64(tag::EPOCH, *epoch).id(tag::EXCLUDED, excluded);
            }
            Msg::Snapshot { tree, ring } => {
                if let Some(t) = tree {
                    w.nested(tag::TREE, &enc_tree(t));
                }
                if let Some(r) = ring {
                    w.nested(tag::RING, &enc_ring(r));
                }
            }
            Msg::Forward(e) | Msg::Store(e) | Msg::StoreAck(e) => enc_envelope(&mut w, e),
            Msg::Push {
                stream,
                producer,
                seq,
                records,
            } => {
                w.u8(tag::KIND, 1)
                    .str(tag::STREAM, stream)
                    .str(tag::PRODUCER, producer)
                    .u64(tag::SEQ, *seq);
                enc_records(&mut w, records);
            }
            Msg::PushAck { stream, producer, next } => {
                w.u8(tag::KIND, REPLY)
                    .str(tag::STREAM, stream)
                    .str(tag::PRODUCER, producer)
                    .u64(tag::NEXT, *next);
            }
            Msg::Pull {
                req,
                profile,
                consumer,
                max,
            } => {
                w.u8(tag::KIND, 1)
                    .u64(tag::REQ, *req)
                    .nested(tag::PROFILE, &encode_profile(profile))
                    .str(tag::CONSUMER, consumer)
                    .u32(tag::MAX, *max);
            }
            Msg::PullReply {
                req,
                records,
                next,
                error,
            } => {
                w.u8(tag::KIND, REPLY).u64(tag::REQ, *req).u64(tag::NEXT, *next);
                for (off, p) in records {
                    let mut e = TlvWriter::new();
                    e.u64(tag::OFFSET, *off).bytes(tag::DATA, p);
                    w.nested(tag::ENTRY, &e);
                }
                if let Some(e) = error {
                    w.str(tag::ERROR, e);
                }
            }
        }
        Frame::new(self.msg.frame_type(), w.finish())
    }

    pub fn from_frame(frame: &Frame) -> Result<Packet, WireError> {
        let f = Fields::parse(&frame.payload)?;
        let from = Contact::new(f.id(tag::FROM_ID)?, f.str(tag::FROM_EP)?);
        let dir = |f: &Fields<'_>| Direction::from_code(f.u8(tag::DIR)?).ok_or_else(|| bad(tag::DIR, "direction"));
        let msg = match frame.kind {
            FrameType::Join => Msg::Join {
                geo: decode_geo(f.req(tag::GEO)?)?,
            },
            FrameType::JoinAck => Msg::JoinAck {
                outcome: match f.u8(tag::OUTCOME)? {
                    0 => JoinOutcome::Accepted,
                    1 => JoinOutcome::Redirect(f.str(tag::REDIRECT)?.to_string()),
                    2 => JoinOutcome::DuplicateId,
                    k => return Err(bad(tag::OUTCOME, format!("join outcome {k}"))),
                },
                ring: f.get(tag::RING).map(dec_ring).transpose()?,
                tree: f.get(tag::TREE).map(dec_tree).transpose()?,
            },
            FrameType::Ping => Msg::Ping { seq: f.u64(tag::SEQ)? },
            FrameType::Pong => Msg::Pong {
                seq: f.u64(tag::SEQ)?,
                master: f.id(tag::MASTER)?,
                master_endpoint: f.str(tag::MASTER_EP)?.to_string(),
                region: path(&f, tag::REGION)?,
                ring_version: f.u64(tag::VERSION)?,
                member: f.flag(tag::IS_MEMBER),
            },
            FrameType::Lookup => Msg::Lookup {
                qid: f.u64(tag::QID)?,
                target: f.id(tag::TARGET)?,
            },
            FrameType::LookupAck => Msg::LookupAck {
                qid: f.u64(tag::QID)?,
                contacts: f.all(tag::CONTACT).map(dec_contact).collect::<Result<_, _>>()?,
            },
            FrameType::ElectProbe => Msg::ElectProbe {
                epoch: f.u64(tag::EPOCH)?,
                excluded: f.id(tag::EXCLUDED)?,
                candidate: f.id(tag::CANDIDATE)?,
                phase: f.u32(tag::PHASE)?,
                hops: f.u32(tag::HOPS)?,
                dir: dir(&f)?,
            },
            FrameType::ElectReply => Msg::ElectReply {
                epoch: f.u64(tag::EPOCH)?,
                excluded: f.id(tag::EXCLUDED)?,
                candidate: f.id(tag::CANDIDATE)?,
                phase: f.u32(tag::PHASE)?,
                dir: dir(&f)?,
            },
            FrameType::ElectWin => Msg::ElectWin {
                epoch: f.u64(tag::EPOCH)?,
                excluded: f.id(tag::EXCLUDED)?,
            },
            FrameType::Snapshot => Msg::Snapshot {
                tree: f.get(tag::TREE).map(dec_tree).transpose()?,
                ring: f.get(tag::RING).map(dec_ring).transpose()?,
            },
            FrameType::Forward => Msg::Forward(dec_envelope(&f)?),
            FrameType::Store => Msg::Store(dec_envelope(&f)?),
            FrameType::StoreAck => Msg::StoreAck(dec_envelope(&f)?),
            FrameType::Push => {
                let stream = f.str(tag::STREAM)?.to_string();
                let producer = f.str(tag::PRODUCER)?.to_string();
                if f.u8(tag::KIND)? == REPLY {
                    Msg::PushAck {
                        stream,
                        producer,
                        next: f.u64(tag::NEXT)?,
                    }
                } else {
                    Msg::Push {
                        stream,
                        producer,
                        seq: f.u64(tag::SEQ)?,
                        records: dec_records(&f),
                    }
                }
            }
            FrameType::Pull => {
                if f.u8(tag::KIND)? == REPLY {
                    let mut records = Vec::new();
                    for raw in f.all(tag::ENTRY) {
                        let e = Fields::parse(raw)?;
                        records.push((e.u64(tag::OFFSET)?, e.req(tag::DATA)?.to_vec()));
                    }
                    Msg::PullReply {
                        req: f.u64(tag::REQ)?,
                        records,
                        next: f.u64(tag::NEXT)?,
                        error: f.opt_str(tag::ERROR)?.map(str::to_string),
                    }
                } else {
                    Msg::Pull {
                        req: f.u64(tag::REQ)?,
                        profile: decode_profile(f.req(tag::PROFILE)?)?,
                        consumer: f.str(tag::CONSUMER)?.to_string(),
                        max: f.u32(tag::MAX)?,
                    }
                }
            }
        };
        Ok(Packet { from, msg })
    }

    pub fn encode(&self, digest: &[u8; 8]) -> Result<Vec<u8>, WireError> {
        self.to_frame().encode(digest)
    }

    pub fn decode(bytes: &[u8], digest: &[u8; 8]) -> Result<Packet, WireError> {
        Packet::from_frame(&Frame::decode(bytes, digest)?)
    }
}
