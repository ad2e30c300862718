//! The rendezvous point as a sans-IO state machine.
//!
//! The host feeds [`Input`]s stamped with the current time and carries out
//! the returned [`Output`]s: frames to send, timers to arm, replies to
//! local clients and functions to start or stop. The simulator and the
//! daemon drive the same engine.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ar::{content_digest, hex, matches, stream_key, ARMessage, Action, FunctionRef, Profile, PushSession, StreamReceiver};
use crate::constants::{SpaceConfig, DEFAULT_CAPACITY, DEFAULT_REPLICAS};
use crate::geo::GeoPoint;
use crate::id::{scaled_key, Endpoint, NodeId};
use crate::overlay::{
    plan_split, responsible_for_target, Contact, Election, ElectionMsg, LeafInfo, Lookup, QuadTreeSnapshot,
    RegionPath, RoutingTable,
};
use crate::rules::{Consequence, DataTuple, Rule, RuleEngine};
use crate::sfc::routing_target;
use crate::store::{PutOutcome, Store, StoreConfig, StoredEntry};
use crate::wire::codec::{decode_function, encode_function};
use crate::wire::{FrameType, WireError, MAX_PAYLOAD};

use super::proto::{
    ClientCmd, ClientReply, Envelope, JoinOutcome, Member, Msg, Notification, OpId, Packet, Receipt, RingView,
    Role, RpResult, Work,
};
use super::queues::{MemQueues, StreamQueues};

#[derive(Debug, Clone)]
pub struct RpConfig {
    pub space: SpaceConfig,
    /// Ring size above which a master tries to split its region.
    pub capacity: usize,
    pub replicas: usize,
    pub bucket_size: usize,
    pub alpha: usize,
    pub keepalive_ms: u64,
    pub miss_threshold: u32,
    pub bootstrap_timeout_ms: u64,
    pub rpc_timeout_ms: u64,
    pub op_timeout_ms: u64,
    pub push_batch: usize,
    /// Runtime tags this node can execute.
    pub runtimes: BTreeSet<String>,
    pub seed: u64,
}

impl RpConfig {
    pub fn new(space: SpaceConfig) -> Self {
        RpConfig {
            space,
            capacity: DEFAULT_CAPACITY,
            replicas: DEFAULT_REPLICAS,
            bucket_size: 8,
            alpha: 3,
            keepalive_ms: 2000,
            miss_threshold: 3,
            bootstrap_timeout_ms: 3000,
            rpc_timeout_ms: 1000,
            op_timeout_ms: 5000,
            push_batch: 64,
            runtimes: ["exec", "inproc"].iter().map(|s| s.to_string()).collect(),
            seed: 0,
        }
    }

    /// Acknowledgments a replicated write needs: ceil((n_rep + 1) / 2).
    pub fn quorum(&self) -> usize {
        (self.replicas + 2) / 2
    }

    fn silence_limit(&self) -> u64 {
        self.keepalive_ms * self.miss_threshold as u64
    }
}

impl Default for RpConfig {
    fn default() -> Self {
        RpConfig::new(SpaceConfig::default())
    }
}

/// Persistent state handed to a node at construction.
pub struct Storage {
    pub store: Store,
    pub functions: Store,
    pub queues: Box<dyn StreamQueues>,
}

impl Storage {
    pub fn in_memory(space: SpaceConfig) -> Self {
        Storage {
            store: Store::in_memory(StoreConfig::new(space)),
            functions: Store::in_memory(StoreConfig::new(space)),
            queues: Box::new(MemQueues::new()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Timer {
    Tick,
    JoinTimeout(u32),
    Rpc { qid: u64, peer: NodeId },
    Coordinate(OpId),
    Origin(OpId),
    ElectionProbe(u64),
    PushRetry { peer: Endpoint, stream: String, mark: u64 },
    PullTimeout(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Start,
    Frame(Vec<u8>),
    Timer(Timer),
    Command { req: u64, cmd: ClientCmd },
    FunctionExited { instance: u64, ok: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeEvent {
    Joined { region: RegionPath, master: NodeId },
    BecameMaster { region: RegionPath, version: u64 },
    Split { region: RegionPath },
    Evicted { peer: NodeId },
    /// This node executed an operation as a rendezvous point.
    Executed { op: OpId, action: Option<Action>, profile: Profile },
    /// An operation this node originated finished.
    Completed(Receipt),
    Notified(Notification),
    RuleFired { rule: String, stream: String, offset: u64 },
    Callback { id: String, tuple: String },
    Rejected(String),
    Fatal(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Output {
    Send { to: Endpoint, kind: FrameType, bytes: Vec<u8> },
    SetTimer { after_ms: u64, timer: Timer },
    Reply { req: u64, reply: ClientReply },
    StartFunction { instance: u64, function: FunctionRef, profile: Profile, input: Vec<u8> },
    StopFunction { instance: u64 },
    Event(NodeEvent),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Idle,
    Joining,
    Running,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Counters {
    pub frames_in: u64,
    pub frames_out: u64,
    pub executed: u64,
    pub lookups: u64,
    pub elections_won: u64,
    pub election_messages: u64,
    pub notifications: u64,
    pub records_in: u64,
    pub rules_fired: u64,
    pub functions_started: u64,
}

#[derive(Debug, Clone)]
struct Registration {
    role: Role,
    profile: Profile,
    endpoint: Endpoint,
}

#[derive(Debug, Clone)]
struct RunningFn {
    profile: Profile,
}

struct Coord {
    origin: Endpoint,
    work: Work,
    master_hops: u32,
    lookup_hops: u32,
    dispatched: bool,
    expected: BTreeSet<NodeId>,
    results: BTreeMap<NodeId, RpResult>,
}

struct ElectionRun {
    e: Election,
    excluded: NodeId,
    started: u64,
    probing: Option<u64>,
}

struct PushState {
    session: PushSession,
    waiting: Vec<(u64, u64)>,
    retries: u32,
}

const REMEMBERED_DELIVERIES: usize = 4096;
const MAX_JOIN_REDIRECTS: u32 = 16;
const MAX_MASTER_HOPS: u32 = 32;

pub struct RpNode {
    cfg: RpConfig,
    me: Member,
    digest: [u8; 8],
    rng: ChaCha8Rng,
    now: u64,
    phase: Phase,
    bootstraps: Vec<Endpoint>,
    boot_idx: usize,
    join_attempt: u32,
    join_redirects: u32,
    ring: RingView,
    tree: QuadTreeSnapshot,
    table: RoutingTable,
    last_heard: BTreeMap<NodeId, u64>,
    master_heard: u64,
    election: Option<ElectionRun>,
    storage: Storage,
    registrations: Vec<Registration>,
    receiver: StreamReceiver,
    pushes: BTreeMap<(Endpoint, String), PushState>,
    pull_pos: BTreeMap<(String, String), u64>,
    remote_pulls: BTreeMap<u64, u64>,
    rules: RuleEngine,
    seq: u64,
    lookups: BTreeMap<u64, (Lookup, OpId)>,
    coords: BTreeMap<OpId, Coord>,
    origins: BTreeMap<OpId, Option<u64>>,
    delivered: BTreeMap<OpId, RpResult>,
    delivered_order: VecDeque<OpId>,
    started: BTreeSet<(String, [u8; 32])>,
    running: BTreeMap<u64, RunningFn>,
    next_instance: u64,
    notifications: Vec<(u64, Notification)>,
    seen_notes: BTreeSet<String>,
    loopback: VecDeque<Packet>,
    out: Vec<Output>,
    pub counters: Counters,
}

impl RpNode {
    pub fn new(
        cfg: RpConfig,
        endpoint: impl Into<Endpoint>,
        geo: GeoPoint,
        salt: u64,
        bootstraps: Vec<Endpoint>,
        storage: Storage,
    ) -> Self {
        let endpoint = endpoint.into();
        let id = NodeId::derive(&endpoint, salt);
        let mut seed = cfg.seed;
        for b in endpoint.bytes() {
            seed = seed.rotate_left(7) ^ b as u64;
        }
        let bootstraps = bootstraps.into_iter().filter(|b| *b != endpoint).collect();
        RpNode {
            digest: cfg.space.digest(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            table: RoutingTable::new(id, cfg.bucket_size),
            cfg,
            me: Member { id, endpoint, geo },
            now: 0,
            phase: Phase::Idle,
            bootstraps,
            boot_idx: 0,
            join_attempt: 0,
            join_redirects: 0,
            ring: RingView {
                region: RegionPath::root(),
                version: 0,
                master: NodeId::ZERO,
                members: Vec::new(),
            },
            tree: QuadTreeSnapshot::from_leaves(0, BTreeMap::new()),
            last_heard: BTreeMap::new(),
            master_heard: 0,
            election: None,
            storage,
            registrations: Vec::new(),
            receiver: StreamReceiver::new(),
            pushes: BTreeMap::new(),
            pull_pos: BTreeMap::new(),
            remote_pulls: BTreeMap::new(),
            rules: RuleEngine::default(),
            seq: 0,
            lookups: BTreeMap::new(),
            coords: BTreeMap::new(),
            origins: BTreeMap::new(),
            delivered: BTreeMap::new(),
            delivered_order: VecDeque::new(),
            started: BTreeSet::new(),
            running: BTreeMap::new(),
            next_instance: 0,
            notifications: Vec::new(),
            seen_notes: BTreeSet::new(),
            loopback: VecDeque::new(),
            out: Vec::new(),
            counters: Counters::default(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.me.id
    }

    pub fn endpoint(&self) -> &Endpoint {
        &self.me.endpoint
    }

    pub fn geo(&self) -> GeoPoint {
        self.me.geo
    }

    pub fn config(&self) -> &RpConfig {
        &self.cfg
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn is_running(&self) -> bool {
        self.phase == Phase::Running
    }

    pub fn is_master(&self) -> bool {
        self.phase == Phase::Running && self.ring.master == self.me.id
    }

    pub fn ring(&self) -> &RingView {
        &self.ring
    }

    pub fn tree(&self) -> &QuadTreeSnapshot {
        &self.tree
    }

    pub fn region(&self) -> &RegionPath {
        &self.ring.region
    }

    pub fn routing_table(&self) -> &RoutingTable {
        &self.table
    }

    pub fn store(&mut self) -> &mut Store {
        &mut self.storage.store
    }

    pub fn functions(&mut self) -> &mut Store {
        &mut self.storage.functions
    }

    pub fn queues(&mut self) -> &mut dyn StreamQueues {
        self.storage.queues.as_mut()
    }

    pub fn notifications(&self) -> &[(u64, Notification)] {
        &self.notifications
    }

    pub fn registration_count(&self) -> usize {
        self.registrations.len()
    }

    pub fn running_functions(&self) -> usize {
        self.running.len()
    }

    pub fn election_in_progress(&self) -> bool {
        self.election.is_some()
    }

    pub fn set_rules(&mut self, rules: Vec<Rule>) {
        self.rules.replace(rules);
    }

    pub fn rules(&self) -> &RuleEngine {
        &self.rules
    }

    /// Flushes store and queues to disk.
    pub fn flush(&mut self) -> Result<(), String> {
        self.storage.store.flush().map_err(|e| e.to_string())?;
        self.storage.functions.flush().map_err(|e| e.to_string())?;
        self.storage.queues.flush().map_err(|e| e.to_string())
    }

    pub fn handle(&mut self, now: u64, input: Input) -> Vec<Output> {
        self.now = self.now.max(now);
        match input {
            Input::Start => self.start(),
            Input::Frame(bytes) => {
                self.counters.frames_in += 1;
                match Packet::decode(&bytes, &self.digest) {
                    Ok(p) => self.on_packet(p),
                    Err(e) => self.on_bad_frame(e),
                }
            }
            Input::Timer(t) => self.on_timer(t),
            Input::Command { req, cmd } => self.on_command(req, cmd),
            Input::FunctionExited { instance, .. } => {
                self.running.remove(&instance);
            }
        }
        while let Some(p) = self.loopback.pop_front() {
            self.on_packet(p);
        }
        std::mem::take(&mut self.out)
    }

    fn contact(&self) -> Contact {
        Contact::new(self.me.id, self.me.endpoint.clone())
    }

    fn event(&mut self, e: NodeEvent) {
        self.out.push(Output::Event(e));
    }

    fn timer(&mut self, after_ms: u64, timer: Timer) {
        self.out.push(Output::SetTimer { after_ms, timer });
    }

    fn reply(&mut self, req: u64, reply: ClientReply) {
        self.out.push(Output::Reply { req, reply });
    }

    fn send(&mut self, to: &str, msg: Msg) {
        let packet = Packet::new(self.contact(), msg);
        if to == self.me.endpoint {
            self.loopback.push_back(packet);
            return;
        }
        let kind = packet.msg.frame_type();
        match packet.encode(&self.digest) {
            Ok(bytes) => {
                self.counters.frames_out += 1;
                self.out.push(Output::Send {
                    to: to.to_string(),
                    kind,
                    bytes,
                });
            }
            Err(e) => self.event(NodeEvent::Rejected(format!("cannot encode {} frame: {e}", kind.name()))),
        }
    }

    fn endpoint_of(&self, id: &NodeId) -> Option<Endpoint> {
        self.ring
            .members
            .iter()
            .find(|m| m.id == *id)
            .map(|m| m.endpoint.clone())
    }

    fn is_member(&self, id: &NodeId) -> bool {
        self.ring.members.iter().any(|m| m.id == *id)
    }

    fn on_bad_frame(&mut self, e: WireError) {
        if self.phase == Phase::Joining && matches!(e, WireError::IncompatibleNetwork { .. }) {
            self.event(NodeEvent::Fatal(e.to_string()));
        } else {
            self.event(NodeEvent::Rejected(e.to_string()));
        }
    }

    // ---- bootstrap and membership ----

    fn start(&mut self) {
        if self.phase != Phase::Idle {
            return;
        }
        self.timer(self.cfg.keepalive_ms, Timer::Tick);
        if self.bootstraps.is_empty() {
            self.become_root();
            return;
        }
        self.phase = Phase::Joining;
        let to = self.bootstraps[0].clone();
        self.send_join(to);
    }

    fn send_join(&mut self, to: Endpoint) {
        self.join_attempt += 1;
        let geo = self.me.geo;
        self.send(&to, Msg::Join { geo });
        self.timer(self.cfg.bootstrap_timeout_ms, Timer::JoinTimeout(self.join_attempt));
    }

    fn rejoin(&mut self, via: Endpoint) {
        self.phase = Phase::Joining;
        self.election = None;
        self.join_redirects = 0;
        self.boot_idx = 0;
        self.send_join(via);
    }

    fn become_root(&mut self) {
        self.phase = Phase::Running;
        self.ring = RingView {
            region: RegionPath::root(),
            version: 1,
            master: self.me.id,
            members: vec![self.me.clone()],
        };
        self.tree = QuadTreeSnapshot::single(LeafInfo {
            master: self.me.id,
            master_endpoint: self.me.endpoint.clone(),
            ring_size: 1,
            epoch: 0,
        });
        self.rebuild_table();
        self.event(NodeEvent::BecameMaster {
            region: RegionPath::root(),
            version: 1,
        });
        self.event(NodeEvent::Joined {
            region: RegionPath::root(),
            master: self.me.id,
        });
    }

    fn on_join_timeout(&mut self, attempt: u32) {
        if self.phase != Phase::Joining || attempt != self.join_attempt {
            return;
        }
        self.join_redirects = 0;
        self.boot_idx += 1;
        if self.boot_idx < self.bootstraps.len() {
            let to = self.bootstraps[self.boot_idx].clone();
            self.send_join(to);
        } else {
            self.become_root();
        }
    }

    fn on_join(&mut self, from: Contact, geo: GeoPoint) {
        if self.phase != Phase::Running {
            return;
        }
        if !self.is_master() {
            let master = self.ring.master;
            if let Some(ep) = self.endpoint_of(&master) {
                self.send(&from.endpoint, Msg::JoinAck {
                    outcome: JoinOutcome::Redirect(ep),
                    ring: None,
                    tree: None,
                });
            }
            return;
        }
        if let Some(leaf) = self.tree.leaf_for(geo) {
            if leaf != self.ring.region {
                if let Some(info) = self.tree.leaf(&leaf) {
                    if info.master != self.me.id {
                        let ep = info.master_endpoint.clone();
                        self.send(&from.endpoint, Msg::JoinAck {
                            outcome: JoinOutcome::Redirect(ep),
                            ring: None,
                            tree: None,
                        });
                        return;
                    }
                }
            }
        }
        if self
            .ring
            .members
            .iter()
            .any(|m| m.id == from.id && m.endpoint != from.endpoint)
        {
            self.send(&from.endpoint, Msg::JoinAck {
                outcome: JoinOutcome::DuplicateId,
                ring: None,
                tree: None,
            });
            return;
        }
        let known = self
            .ring
            .members
            .iter()
            .any(|m| m.id == from.id && m.endpoint == from.endpoint && m.geo == geo);
        if !known {
            self.ring
                .members
                .retain(|m| m.id != from.id && m.endpoint != from.endpoint);
            self.ring.members.push(Member {
                id: from.id,
                endpoint: from.endpoint.clone(),
                geo,
            });
            self.ring.version += 1;
            self.last_heard.insert(from.id, self.now);
            self.rebuild_table();
            self.refresh_leaf();
        }
        let ack = Msg::JoinAck {
            outcome: JoinOutcome::Accepted,
            ring: Some(self.ring.clone()),
            tree: Some(self.tree.clone()),
        };
        self.send(&from.endpoint, ack);
        if !known {
            self.broadcast_ring(Some(&from.id));
            self.maybe_split();
        }
    }

    fn on_join_ack(&mut self, from: Contact, outcome: JoinOutcome, ring: Option<RingView>, tree: Option<QuadTreeSnapshot>) {
        match outcome {
            JoinOutcome::Accepted => {
                let Some(ring) = ring else { return };
                if !ring.members.iter().any(|m| m.id == self.me.id) {
                    return;
                }
                if self.phase == Phase::Running
                    && ring.region == self.ring.region
                    && ring.version < self.ring.version
                {
                    return;
                }
                if let Some(t) = tree {
                    if self.tree.is_empty() {
                        self.tree = t;
                    } else {
                        self.tree.merge(&t);
                    }
                }
                let first = self.phase != Phase::Running;
                self.phase = Phase::Running;
                self.adopt_ring(ring, first);
            }
            JoinOutcome::Redirect(ep) => {
                if self.phase != Phase::Joining {
                    return;
                }
                self.join_redirects += 1;
                if self.join_redirects > MAX_JOIN_REDIRECTS {
                    self.on_join_timeout(self.join_attempt);
                } else {
                    self.send_join(ep);
                }
            }
            JoinOutcome::DuplicateId => {
                if self.phase != Phase::Joining {
                    return;
                }
                let salt: u64 = self.rng.random();
                self.me.id = NodeId::derive(&self.me.endpoint, salt);
                self.table = RoutingTable::new(self.me.id, self.cfg.bucket_size);
                self.send_join(from.endpoint);
            }
        }
    }

    fn adopt_ring(&mut self, view: RingView, announce: bool) {
        let was_master = self.is_master();
        let region_changed = view.region != self.ring.region;
        self.ring = view;
        self.phase = Phase::Running;
        self.election = None;
        self.master_heard = self.now;
        self.rebuild_table();
        let now = self.now;
        let becomes_master = self.ring.master == self.me.id;
        for m in &self.ring.members {
            if becomes_master && !was_master {
                self.last_heard.insert(m.id, now);
            } else {
                self.last_heard.entry(m.id).or_insert(now);
            }
        }
        if becomes_master && !was_master {
            self.event(NodeEvent::BecameMaster {
                region: self.ring.region.clone(),
                version: self.ring.version,
            });
        }
        if announce || region_changed {
            self.event(NodeEvent::Joined {
                region: self.ring.region.clone(),
                master: self.ring.master,
            });
        }
    }

    fn rebuild_table(&mut self) {
        self.table.clear();
        let me = self.me.id;
        for m in &self.ring.members {
            if m.id != me {
                self.table.insert(m.contact());
            }
        }
    }

    fn broadcast_ring(&mut self, skip: Option<&NodeId>) {
        let targets: Vec<Endpoint> = self
            .ring
            .members
            .iter()
            .filter(|m| m.id != self.me.id && Some(&m.id) != skip)
            .map(|m| m.endpoint.clone())
            .collect();
        for ep in targets {
            let msg = Msg::Snapshot {
                tree: Some(self.tree.clone()),
                ring: Some(self.ring.clone()),
            };
            self.send(&ep, msg);
        }
    }

    fn broadcast_tree(&mut self) {
        let targets: Vec<Endpoint> = self
            .tree
            .leaves()
            .values()
            .filter(|l| l.master != self.me.id)
            .map(|l| l.master_endpoint.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        for ep in targets {
            let msg = Msg::Snapshot {
                tree: Some(self.tree.clone()),
                ring: None,
            };
            self.send(&ep, msg);
        }
    }

    /// Publishes this master's leaf when its size or master changed.
    fn refresh_leaf(&mut self) {
        if !self.is_master() {
            return;
        }
        let region = self.ring.region.clone();
        let epoch = self.tree.leaf(&region).map_or(0, |l| l.epoch);
        let info = LeafInfo {
            master: self.me.id,
            master_endpoint: self.me.endpoint.clone(),
            ring_size: self.ring.members.len() as u32,
            epoch,
        };
        if self.tree.leaf(&region) != Some(&info) {
            self.tree.set_leaf(region, info);
            self.broadcast_tree();
        }
    }

    fn maybe_split(&mut self) {
        if !self.is_master() {
            return;
        }
        let region = self.ring.region.clone();
        let items: Vec<(Member, GeoPoint)> = self.ring.members.iter().map(|m| (m.clone(), m.geo)).collect();
        let Some(parts) = plan_split(region.bounds(), &items, self.cfg.capacity, self.cfg.replicas.max(1)) else {
            return;
        };
        let version = self.ring.version + 1;
        let mut views = Vec::with_capacity(4);
        let mut infos = Vec::with_capacity(4);
        for (digit, part) in parts.into_iter().enumerate() {
            let pick = self.rng.random_range(0..part.len());
            let master = part[pick].clone();
            infos.push(LeafInfo {
                master: master.id,
                master_endpoint: master.endpoint.clone(),
                ring_size: part.len() as u32,
                epoch: 0,
            });
            views.push(RingView {
                region: region.child(digit as u8),
                version,
                master: master.id,
                members: part,
            });
        }
        let infos: [LeafInfo; 4] = infos.try_into().expect("four quadrants");
        if !self.tree.split(&region, infos) {
            return;
        }
        self.event(NodeEvent::Split { region });
        for view in &views {
            for m in &view.members {
                let msg = Msg::Snapshot {
                    tree: Some(self.tree.clone()),
                    ring: Some(view.clone()),
                };
                self.send(&m.endpoint, msg);
            }
        }
        self.broadcast_tree();
    }

    fn evict(&mut self, dead: Vec<NodeId>) {
        for id in &dead {
            self.ring.members.retain(|m| m.id != *id);
            self.table.remove(id);
            self.last_heard.remove(id);
            self.event(NodeEvent::Evicted { peer: *id });
        }
        self.ring.version += 1;
        self.refresh_leaf();
        self.broadcast_ring(None);
    }

    fn on_snapshot(&mut self, from: Contact, tree: Option<QuadTreeSnapshot>, ring: Option<RingView>) {
        if self.phase != Phase::Running {
            return;
        }
        if let Some(t) = tree {
            self.on_tree(&from, t);
        }
        let Some(view) = ring else { return };
        let mine = &self.ring.region;
        let descends = mine.is_prefix_of(&view.region) && view.region != *mine;
        let newer = (view.region == *mine && view.version > self.ring.version) || descends;
        if !newer {
            return;
        }
        if view.members.iter().any(|m| m.id == self.me.id) {
            self.adopt_ring(view, false);
        } else if view.region == *mine {
            let master = view.members.iter().find(|m| m.id == view.master).map(|m| m.endpoint.clone());
            if let Some(ep) = master {
                self.rejoin(ep);
            }
        }
    }

    fn on_tree(&mut self, from: &Contact, t: QuadTreeSnapshot) {
        if self.tree.is_empty() {
            self.tree = t;
            return;
        }
        let changed = self.tree.merge(&t);
        if !self.is_master() {
            return;
        }
        let region = self.ring.region.clone();
        if let Some(leaf) = self.tree.leaf(&region) {
            if leaf.master != self.me.id {
                // the leaf moved to a master with a later epoch
                let ep = leaf.master_endpoint.clone();
                self.rejoin(ep);
                return;
            }
        }
        if changed && t.leaves() != self.tree.leaves() {
            let msg = Msg::Snapshot {
                tree: Some(self.tree.clone()),
                ring: None,
            };
            self.send(&from.endpoint, msg);
        }
    }

    // ---- keepalive and election ----

    fn on_tick(&mut self) {
        self.timer(self.cfg.keepalive_ms, Timer::Tick);
        if self.phase != Phase::Running {
            return;
        }
        let limit = self.cfg.silence_limit();
        let now = self.now;
        if self.is_master() {
            let dead: Vec<NodeId> = self
                .ring
                .members
                .iter()
                .filter(|m| m.id != self.me.id)
                .filter(|m| now.saturating_sub(*self.last_heard.get(&m.id).unwrap_or(&0)) > limit)
                .map(|m| m.id)
                .collect();
            if !dead.is_empty() {
                self.evict(dead);
            }
            let targets: Vec<Endpoint> = self
                .ring
                .members
                .iter()
                .filter(|m| m.id != self.me.id)
                .map(|m| m.endpoint.clone())
                .collect();
            for ep in targets {
                self.send(&ep, Msg::Ping { seq: now });
            }
            return;
        }
        if let Some(run) = &self.election {
            if run.probing.is_none() && now.saturating_sub(run.started) > 2 * self.cfg.keepalive_ms {
                self.probe_participants();
            }
            return;
        }
        let master = self.ring.master;
        match self.endpoint_of(&master) {
            Some(ep) if now.saturating_sub(self.master_heard) <= limit => self.send(&ep, Msg::Ping { seq: now }),
            _ => {
                let parts: Vec<NodeId> = self.ring.members.iter().map(|m| m.id).filter(|id| *id != master).collect();
                self.start_election(self.ring.version, master, parts);
            }
        }
    }

    fn on_ping(&mut self, from: Contact, seq: u64) {
        let member = self.is_member(&from.id);
        let master = self.ring.master;
        let msg = Msg::Pong {
            seq,
            master,
            master_endpoint: self.endpoint_of(&master).unwrap_or_default(),
            region: self.ring.region.clone(),
            ring_version: self.ring.version,
            member,
        };
        self.send(&from.endpoint, msg);
    }

    fn on_pong(&mut self, from: Contact, ring_version: u64, member: bool, region: RegionPath) {
        if self.phase != Phase::Running || self.is_master() || from.id != self.ring.master {
            return;
        }
        if !member || region != self.ring.region {
            self.rejoin(from.endpoint);
        } else if ring_version > self.ring.version {
            // missed a membership update: ask again
            let geo = self.me.geo;
            self.send(&from.endpoint, Msg::Join { geo });
        }
    }

    fn start_election(&mut self, epoch: u64, excluded: NodeId, participants: Vec<NodeId>) {
        let mut e = Election::new(self.me.id, participants, epoch);
        let out = e.start();
        self.election = Some(ElectionRun {
            e,
            excluded,
            started: self.now,
            probing: None,
        });
        self.emit_election(epoch, excluded, out);
        self.check_won();
    }

    fn emit_election(&mut self, epoch: u64, excluded: NodeId, out: Vec<(NodeId, ElectionMsg)>) {
        for (to, m) in out {
            let Some(ep) = self.endpoint_of(&to) else { continue };
            self.counters.election_messages += 1;
            let msg = match m {
                ElectionMsg::Probe {
                    candidate,
                    phase,
                    hops,
                    dir,
                } => Msg::ElectProbe {
                    epoch,
                    excluded,
                    candidate,
                    phase,
                    hops,
                    dir,
                },
                ElectionMsg::Reply { candidate, phase, dir } => Msg::ElectReply {
                    epoch,
                    excluded,
                    candidate,
                    phase,
                    dir,
                },
            };
            self.send(&ep, msg);
        }
    }

    fn on_election_msg(&mut self, epoch: u64, excluded: NodeId, m: ElectionMsg) {
        if self.phase != Phase::Running || excluded == self.me.id {
            return;
        }
        let current = self.election.as_ref().map(|r| r.e.epoch);
        match current {
            Some(c) if c > epoch => return,
            Some(c) if c == epoch => {}
            _ => {
                if excluded != self.ring.master {
                    return;
                }
                let parts: Vec<NodeId> = self.ring.members.iter().map(|m| m.id).filter(|id| *id != excluded).collect();
                self.election = Some(ElectionRun {
                    e: Election::new(self.me.id, parts, epoch),
                    excluded,
                    started: self.now,
                    probing: None,
                });
            }
        }
        let run = self.election.as_mut().expect("election present");
        let out = run.e.on_message(m);
        self.emit_election(epoch, excluded, out);
        self.check_won();
    }

    /// The election stalled: find out who is still alive, then restart
    /// among the responders.
    fn probe_participants(&mut self) {
        let Some(run) = self.election.as_mut() else { return };
        run.probing = Some(self.now);
        let epoch = run.e.epoch;
        let parts: Vec<NodeId> = run.e.participants().iter().copied().filter(|p| *p != self.me.id).collect();
        for p in parts {
            if let Some(ep) = self.endpoint_of(&p) {
                self.send(&ep, Msg::Ping { seq: self.now });
            }
        }
        self.timer(self.cfg.rpc_timeout_ms, Timer::ElectionProbe(epoch));
    }

    fn on_election_probe(&mut self, epoch: u64) {
        let Some(run) = self.election.as_ref() else { return };
        if run.e.epoch != epoch {
            return;
        }
        let Some(since) = run.probing else { return };
        let excluded = run.excluded;
        let alive: Vec<NodeId> = run
            .e
            .participants()
            .iter()
            .copied()
            .filter(|p| *p != self.me.id && self.last_heard.get(p).is_some_and(|t| *t >= since))
            .collect();
        self.start_election(epoch + 1, excluded, alive);
    }

    fn check_won(&mut self) {
        if !self.election.as_ref().is_some_and(|r| r.e.has_won()) {
            return;
        }
        let run = self.election.take().expect("checked");
        let parts: BTreeSet<NodeId> = run.e.participants().iter().copied().collect();
        let epoch = run.e.epoch;
        self.counters.elections_won += 1;
        self.ring.members.retain(|m| parts.contains(&m.id));
        self.ring.master = self.me.id;
        self.ring.version = self.ring.version.max(epoch) + 1;
        self.table.remove(&run.excluded);
        self.last_heard.remove(&run.excluded);
        let now = self.now;
        for m in &self.ring.members {
            self.last_heard.insert(m.id, now);
        }
        let targets: Vec<Endpoint> = self
            .ring
            .members
            .iter()
            .filter(|m| m.id != self.me.id)
            .map(|m| m.endpoint.clone())
            .collect();
        for ep in targets {
            self.send(&ep, Msg::ElectWin {
                epoch,
                excluded: run.excluded,
            });
        }
        let region = self.ring.region.clone();
        let leaf_epoch = self.tree.leaf(&region).map_or(0, |l| l.epoch) + 1;
        let info = LeafInfo {
            master: self.me.id,
            master_endpoint: self.me.endpoint.clone(),
            ring_size: self.ring.members.len() as u32,
            epoch: leaf_epoch,
        };
        self.tree.set_leaf(region.clone(), info);
        self.rebuild_table();
        self.event(NodeEvent::BecameMaster {
            region,
            version: self.ring.version,
        });
        self.broadcast_ring(None);
        self.broadcast_tree();
    }

    fn on_elect_win(&mut self, from: Contact, epoch: u64) {
        if self.phase != Phase::Running || !self.is_member(&from.id) {
            return;
        }
        if let Some(run) = &self.election {
            if run.e.epoch > epoch {
                return;
            }
        }
        self.election = None;
        self.ring.master = from.id;
        self.master_heard = self.now;
    }

    // ---- timers ----

    fn on_timer(&mut self, t: Timer) {
        match t {
            Timer::Tick => self.on_tick(),
            Timer::JoinTimeout(a) => self.on_join_timeout(a),
            Timer::Rpc { qid, peer } => {
                if let Some((l, _)) = self.lookups.get_mut(&qid) {
                    if l.is_in_flight(&peer) {
                        l.on_timeout(&peer);
                        self.drive_lookup(qid);
                    }
                }
            }
            Timer::Coordinate(op) => self.finalize(op),
            Timer::Origin(op) => {
                if let Some(req) = self.origins.remove(&op) {
                    let receipt = Receipt {
                        op,
                        action: None,
                        results: Vec::new(),
                        missing: Vec::new(),
                        degraded: false,
                        error: Some("operation timed out".into()),
                        master_hops: 0,
                        lookup_hops: 0,
                    };
                    self.complete(receipt, req);
                }
            }
            Timer::ElectionProbe(epoch) => self.on_election_probe(epoch),
            Timer::PushRetry { peer, stream, mark } => self.on_push_retry(peer, stream, mark),
            Timer::PullTimeout(wire_req) => {
                if let Some(req) = self.remote_pulls.remove(&wire_req) {
                    self.reply(req, ClientReply::Error("pull timed out: peer unreachable".into()));
                }
            }
        }
    }

    // ---- packets ----

    fn on_packet(&mut self, p: Packet) {
        let from = p.from;
        if from.id != self.me.id {
            self.last_heard.insert(from.id, self.now);
            if from.id == self.ring.master {
                self.master_heard = self.now;
            }
            if self.is_member(&from.id) && !self.table.contains(&from.id) {
                self.table.insert(from.clone());
            }
        }
        match p.msg {
            Msg::Join { geo } => self.on_join(from, geo),
            Msg::JoinAck { outcome, ring, tree } => self.on_join_ack(from, outcome, ring, tree),
            Msg::Ping { seq } => self.on_ping(from, seq),
            Msg::Pong {
                ring_version,
                member,
                region,
                ..
            } => self.on_pong(from, ring_version, member, region),
            Msg::Lookup { qid, target } => {
                let contacts = self.table.closest(&target, self.cfg.bucket_size);
                self.send(&from.endpoint, Msg::LookupAck { qid, contacts });
            }
            Msg::LookupAck { qid, contacts } => {
                if let Some((l, _)) = self.lookups.get_mut(&qid) {
                    l.on_reply(&from.id, contacts);
                    self.drive_lookup(qid);
                }
            }
            Msg::ElectProbe {
                epoch,
                excluded,
                candidate,
                phase,
                hops,
                dir,
            } => self.on_election_msg(epoch, excluded, ElectionMsg::Probe {
                candidate,
                phase,
                hops,
                dir,
            }),
            Msg::ElectReply {
                epoch,
                excluded,
                candidate,
                phase,
                dir,
            } => self.on_election_msg(epoch, excluded, ElectionMsg::Reply { candidate, phase, dir }),
            Msg::ElectWin { epoch, .. } => self.on_elect_win(from, epoch),
            Msg::Snapshot { tree, ring } => self.on_snapshot(from, tree, ring),
            Msg::Forward(env) | Msg::Store(env) | Msg::StoreAck(env) => self.on_envelope(from, env),
            Msg::Push {
                stream,
                producer,
                seq,
                records,
            } => self.on_push(from, stream, producer, seq, records),
            Msg::PushAck { stream, next, .. } => self.on_push_ack(from, stream, next),
            Msg::Pull {
                req,
                profile,
                consumer,
                max,
            } => {
                let msg = match self.pull_local(&profile, &consumer, max) {
                    Ok((records, next)) => Msg::PullReply {
                        req,
                        records,
                        next,
                        error: None,
                    },
                    Err(e) => Msg::PullReply {
                        req,
                        records: Vec::new(),
                        next: 0,
                        error: Some(e),
                    },
                };
                self.send(&from.endpoint, msg);
            }
            Msg::PullReply {
                req,
                records,
                next,
                error,
            } => {
                if let Some(client) = self.remote_pulls.remove(&req) {
                    let reply = match error {
                        Some(e) => ClientReply::Error(e),
                        None => ClientReply::Records { records, next },
                    };
                    self.reply(client, reply);
                }
            }
        }
    }

    fn on_envelope(&mut self, from: Contact, env: Envelope) {
        match env {
            Envelope::Route {
                op,
                origin,
                work,
                master_hops,
                tree,
            } => {
                if let Some(t) = tree {
                    self.on_tree(&from, t);
                }
                self.route(op, origin, work, master_hops);
            }
            Envelope::Deliver {
                op,
                coordinator,
                registrant,
                work,
                leader,
                ..
            } => {
                let result = match self.delivered.get(&op) {
                    Some(r) => RpResult {
                        duplicate: true,
                        ..r.clone()
                    },
                    None => {
                        let r = self.execute(op, &registrant, &work, leader == self.me.id);
                        self.remember(op, r.clone());
                        r
                    }
                };
                self.send(&coordinator, Msg::StoreAck(Envelope::DeliverAck { op, result }));
            }
            Envelope::DeliverAck { op, result } => {
                let Some(c) = self.coords.get_mut(&op) else { return };
                c.results.insert(result.rp, result);
                if c.dispatched && c.expected.iter().all(|id| c.results.contains_key(id)) {
                    self.finalize(op);
                }
            }
            Envelope::Done(receipt) => {
                if let Some(req) = self.origins.remove(&receipt.op) {
                    self.complete(receipt, req);
                }
            }
            Envelope::Notify(n) => self.on_notification(n),
            Envelope::Request { req, cmd } => {
                // remote clients get their reply as a frame
                let _ = (req, cmd);
                self.event(NodeEvent::Rejected("client requests are served through the local interface".into()));
            }
            Envelope::Reply { .. } => {}
        }
    }

    fn remember(&mut self, op: OpId, r: RpResult) {
        self.delivered.insert(op, r);
        self.delivered_order.push_back(op);
        while self.delivered_order.len() > REMEMBERED_DELIVERIES {
            if let Some(old) = self.delivered_order.pop_front() {
                self.delivered.remove(&old);
            }
        }
    }

    // ---- client commands ----

    fn on_command(&mut self, req: u64, cmd: ClientCmd) {
        if self.phase != Phase::Running && !matches!(cmd, ClientCmd::Status | ClientCmd::Notifications { .. }) {
            self.reply(req, ClientReply::Error("node has not joined the overlay yet".into()));
            return;
        }
        match cmd {
            ClientCmd::Post(m) => {
                self.originate(Work::Post(m), Some(req));
            }
            ClientCmd::Query { profile, location } => {
                self.originate(Work::Query { profile, location }, Some(req));
            }
            ClientCmd::Status => {
                let lines = self.status_lines();
                self.reply(req, ClientReply::Lines(lines));
            }
            ClientCmd::Push { peer, profile, records } => self.start_push(req, peer, &profile, records),
            ClientCmd::Pull {
                peer,
                profile,
                consumer,
                max,
            } => match peer {
                Some(p) if p != self.me.endpoint => {
                    self.seq += 1;
                    let wire = self.seq;
                    self.remote_pulls.insert(wire, req);
                    self.send(&p, Msg::Pull {
                        req: wire,
                        profile,
                        consumer,
                        max,
                    });
                    self.timer(self.cfg.op_timeout_ms, Timer::PullTimeout(wire));
                }
                _ => {
                    let reply = match self.pull_local(&profile, &consumer, max) {
                        Ok((records, next)) => ClientReply::Records { records, next },
                        Err(e) => ClientReply::Error(e),
                    };
                    self.reply(req, reply);
                }
            },
            ClientCmd::Notifications { since } => {
                let lines = self
                    .notifications
                    .iter()
                    .filter(|(s, _)| *s > since)
                    .map(|(s, n)| format_notification(*s, n))
                    .collect();
                self.reply(req, ClientReply::Lines(lines));
            }
        }
    }

    /// Starts an operation from this node. Returns its id.
    pub fn post(&mut self, now: u64, msg: ARMessage) -> (OpId, Vec<Output>) {
        self.now = self.now.max(now);
        let op = self.originate(Work::Post(msg), None);
        while let Some(p) = self.loopback.pop_front() {
            self.on_packet(p);
        }
        (op, std::mem::take(&mut self.out))
    }

    pub fn query(&mut self, now: u64, profile: Profile, location: Option<GeoPoint>) -> (OpId, Vec<Output>) {
        self.now = self.now.max(now);
        let op = self.originate(Work::Query { profile, location }, None);
        while let Some(p) = self.loopback.pop_front() {
            self.on_packet(p);
        }
        (op, std::mem::take(&mut self.out))
    }

    fn originate(&mut self, work: Work, req: Option<u64>) -> OpId {
        self.seq += 1;
        let op = OpId {
            origin: self.me.id,
            seq: self.seq,
        };
        self.origins.insert(op, req);
        if let Work::Post(m) = &work {
            if m.data.len() + 4096 > MAX_PAYLOAD {
                self.origins.remove(&op);
                let receipt = Receipt {
                    op,
                    action: Some(m.action),
                    results: Vec::new(),
                    missing: Vec::new(),
                    degraded: false,
                    error: Some(WireError::PayloadTooLarge(m.data.len()).to_string()),
                    master_hops: 0,
                    lookup_hops: 0,
                };
                self.complete(receipt, req);
                return op;
            }
        }
        self.timer(self.cfg.op_timeout_ms * 3, Timer::Origin(op));
        let origin = self.me.endpoint.clone();
        let dest = work
            .location()
            .and_then(|g| self.tree.leaf_for(g))
            .unwrap_or_else(|| self.ring.region.clone());
        if dest == self.ring.region {
            self.coordinate(op, origin, work, 0);
        } else {
            self.route(op, origin, work, 0);
        }
        op
    }

    fn complete(&mut self, receipt: Receipt, req: Option<u64>) {
        self.event(NodeEvent::Completed(receipt.clone()));
        if let Some(r) = req {
            self.reply(r, ClientReply::Receipt(receipt));
        }
    }

    /// Moves an operation one step along the master chain.
    fn route(&mut self, op: OpId, origin: Endpoint, work: Work, hops: u32) {
        if self.phase != Phase::Running {
            return;
        }
        if !self.is_master() {
            let master = self.ring.master;
            if let Some(ep) = self.endpoint_of(&master) {
                let msg = Msg::Forward(Envelope::Route {
                    op,
                    origin,
                    work,
                    master_hops: hops,
                    tree: None,
                });
                self.send(&ep, msg);
            }
            return;
        }
        let hops = hops + 1;
        let dest = work
            .location()
            .and_then(|g| self.tree.leaf_for(g))
            .unwrap_or_else(|| self.ring.region.clone());
        if dest == self.ring.region {
            self.coordinate(op, origin, work, hops);
            return;
        }
        let next = self.tree.leaf(&dest).map(|l| (l.master, l.master_endpoint.clone()));
        match next {
            Some((m, ep)) if m != self.me.id && hops <= MAX_MASTER_HOPS => {
                let msg = Msg::Forward(Envelope::Route {
                    op,
                    origin,
                    work,
                    master_hops: hops,
                    tree: Some(self.tree.clone()),
                });
                self.send(&ep, msg);
            }
            _ => self.coordinate(op, origin, work, hops),
        }
    }

    fn coordinate(&mut self, op: OpId, origin: Endpoint, work: Work, master_hops: u32) {
        if self.coords.contains_key(&op) {
            return;
        }
        let target = match routing_target(work.profile(), self.cfg.space) {
            Ok(t) => t,
            Err(e) => {
                let receipt = Receipt {
                    op,
                    action: work.action(),
                    results: Vec::new(),
                    missing: Vec::new(),
                    degraded: false,
                    error: Some(e.to_string()),
                    master_hops,
                    lookup_hops: 0,
                };
                self.send(&origin, Msg::Forward(Envelope::Done(receipt)));
                return;
            }
        };
        let key = scaled_key(target.anchor(), self.cfg.space);
        self.coords.insert(op, Coord {
            origin,
            work,
            master_hops,
            lookup_hops: 0,
            dispatched: false,
            expected: BTreeSet::new(),
            results: BTreeMap::new(),
        });
        self.timer(self.cfg.op_timeout_ms, Timer::Coordinate(op));
        if target.is_point() {
            self.counters.lookups += 1;
            self.seq += 1;
            let qid = self.seq;
            let seeds = self.table.closest(&key, self.cfg.bucket_size);
            let lookup = Lookup::new(
                key,
                self.cfg.replicas.max(1),
                self.cfg.bucket_size,
                self.cfg.alpha,
                self.contact(),
                seeds,
            );
            self.lookups.insert(qid, (lookup, op));
            self.drive_lookup(qid);
        } else {
            let ids: Vec<NodeId> = self.ring.members.iter().map(|m| m.id).collect();
            let set = responsible_for_target(&ids, &target, self.cfg.space, self.cfg.replicas.max(1));
            let contacts: Vec<Contact> = self
                .ring
                .members
                .iter()
                .filter(|m| set.contains(&m.id))
                .map(Member::contact)
                .collect();
            self.dispatch(op, contacts, key);
        }
    }

    fn drive_lookup(&mut self, qid: u64) {
        let Some((l, _)) = self.lookups.get_mut(&qid) else { return };
        let target = l.target();
        let reqs = l.next_requests();
        let done = l.is_done();
        for c in reqs {
            self.send(&c.endpoint, Msg::Lookup { qid, target });
            self.timer(self.cfg.rpc_timeout_ms, Timer::Rpc { qid, peer: c.id });
        }
        if done {
            let (l, op) = self.lookups.remove(&qid).expect("present");
            if let Some(c) = self.coords.get_mut(&op) {
                c.lookup_hops = l.hops();
            }
            self.dispatch(op, l.result(), target);
        }
    }

    fn dispatch(&mut self, op: OpId, contacts: Vec<Contact>, key: NodeId) {
        let Some(c) = self.coords.get_mut(&op) else { return };
        c.dispatched = true;
        c.expected = contacts.iter().map(|c| c.id).collect();
        if contacts.is_empty() {
            self.finalize(op);
            return;
        }
        let leader = contacts
            .iter()
            .map(|c| c.id)
            .min_by_key(|id| id.distance(&key))
            .expect("non-empty");
        let registrant = c.origin.clone();
        let work = c.work.clone();
        for contact in contacts {
            let msg = Msg::Store(Envelope::Deliver {
                op,
                coordinator: self.me.endpoint.clone(),
                registrant: registrant.clone(),
                registrant_id: op.origin,
                work: work.clone(),
                leader,
                replica: contact.id != leader,
            });
            self.send(&contact.endpoint, msg);
        }
    }

    fn finalize(&mut self, op: OpId) {
        let Some(c) = self.coords.remove(&op) else { return };
        self.lookups.retain(|_, (_, o)| *o != op);
        let missing: Vec<NodeId> = c
            .expected
            .iter()
            .filter(|id| !c.results.contains_key(id))
            .copied()
            .collect();
        let action = c.work.action();
        let results: Vec<RpResult> = c.results.into_values().collect();
        let acks = results.iter().filter(|r| r.error.is_none()).count();
        let degraded = matches!(action, Some(Action::Store | Action::StoreFunction)) && acks < self.cfg.quorum();
        let error = if results.is_empty() {
            Some("no rendezvous point reached".to_string())
        } else {
            None
        };
        let receipt = Receipt {
            op,
            action,
            results,
            missing,
            degraded,
            error,
            master_hops: c.master_hops,
            lookup_hops: c.lookup_hops,
        };
        self.send(&c.origin, Msg::Forward(Envelope::Done(receipt)));
    }

    // ---- reactive actions ----

    fn execute(&mut self, op: OpId, registrant: &Endpoint, work: &Work, leader: bool) -> RpResult {
        let mut r = RpResult {
            rp: self.me.id,
            endpoint: self.me.endpoint.clone(),
            ..RpResult::default()
        };
        self.counters.executed += 1;
        self.event(NodeEvent::Executed {
            op,
            action: work.action(),
            profile: work.profile().clone(),
        });
        match work {
            Work::Query { profile, location } => {
                // stored profiles carry the location terms of their post
                let mut q = profile.clone();
                for t in location.iter().flat_map(|g| g.terms()) {
                    q.push(t);
                }
                match self.storage.store.query(&q) {
                    Ok(es) => {
                        r.count = es.len() as u64;
                        r.entries = es.into_iter().map(|e| (e.profile, e.data)).collect();
                    }
                    Err(e) => r.error = Some(e.to_string()),
                }
            }
            Work::Post(msg) => self.execute_action(op, msg, registrant, leader, &mut r),
        }
        r
    }

    fn execute_action(&mut self, op: OpId, msg: &ARMessage, registrant: &Endpoint, leader: bool, r: &mut RpResult) {
        let profile = msg.match_profile();
        let space = self.cfg.space;
        match msg.action {
            Action::Store => {
                let entry = match StoredEntry::new(profile, msg.data.clone(), op.origin, self.now, space) {
                    Ok(e) => e,
                    Err(e) => {
                        r.error = Some(e.to_string());
                        return;
                    }
                };
                match self.storage.store.put(entry.clone()) {
                    Ok(PutOutcome::Inserted) => {
                        r.count = 1;
                        self.notify_subscribers(&entry.profile, &entry.data);
                    }
                    Ok(PutOutcome::Duplicate) => {
                        r.count = 1;
                        r.duplicate = true;
                    }
                    Err(e) => r.error = Some(e.to_string()),
                }
            }
            Action::Delete => {
                let mut n = 0;
                match self.storage.store.delete_matching(&profile) {
                    Ok(k) => n += k,
                    Err(e) => r.error = Some(e.to_string()),
                }
                if let Ok(k) = self.storage.functions.delete_matching(&profile) {
                    n += k;
                }
                let before = self.registrations.len();
                self.registrations.retain(|g| !matches(&g.profile, &profile));
                n += before - self.registrations.len();
                r.count = n as u64;
            }
            Action::Statistics => {
                r.stats = Some(self.status_lines().join(" "));
                r.count = 1;
            }
            Action::StoreFunction => {
                let Some(f) = &msg.topology else {
                    r.error = Some("store-function needs a function in the topology field".into());
                    return;
                };
                let blob = encode_function(f).finish();
                match StoredEntry::new(profile, blob, op.origin, self.now, space)
                    .and_then(|e| self.storage.functions.put(e))
                {
                    Ok(out) => {
                        r.count = 1;
                        r.duplicate = out == PutOutcome::Duplicate;
                    }
                    Err(e) => r.error = Some(e.to_string()),
                }
            }
            Action::StartFunction => {
                if !leader {
                    return;
                }
                let found = match self.storage.functions.query(&profile) {
                    Ok(f) => f,
                    Err(e) => {
                        r.error = Some(e.to_string());
                        return;
                    }
                };
                let msg_digest = msg.content_digest();
                for entry in found {
                    let Ok(function) = decode_function(&entry.data) else { continue };
                    r.count += 1;
                    if !self.cfg.runtimes.contains(&function.runtime_tag) {
                        r.error = Some(format!(
                            "function start failed: no executor for runtime {:?}",
                            function.runtime_tag
                        ));
                        continue;
                    }
                    if !self.started.insert((function.digest_hex(), msg_digest)) {
                        continue;
                    }
                    self.next_instance += 1;
                    let instance = self.next_instance;
                    self.running.insert(instance, RunningFn {
                        profile: entry.profile.clone(),
                    });
                    self.counters.functions_started += 1;
                    r.started += 1;
                    self.out.push(Output::StartFunction {
                        instance,
                        function,
                        profile: entry.profile,
                        input: msg.data.clone(),
                    });
                }
            }
            Action::StopFunction => {
                let stop: Vec<u64> = self
                    .running
                    .iter()
                    .filter(|(_, f)| matches(&f.profile, &profile))
                    .map(|(i, _)| *i)
                    .collect();
                for i in stop {
                    self.running.remove(&i);
                    self.out.push(Output::StopFunction { instance: i });
                    r.count += 1;
                }
            }
            Action::NotifyInterest => self.register(Role::Producer, profile, registrant.clone(), r),
            Action::NotifyData => {
                self.register(Role::Consumer, profile.clone(), registrant.clone(), r);
                match self.storage.store.query(&profile) {
                    Ok(es) => {
                        for e in es {
                            let n = Notification::Data {
                                subscription: profile.clone(),
                                profile: e.profile,
                                data: e.data,
                                rp: self.me.id,
                            };
                            self.notify(registrant, n);
                        }
                    }
                    Err(e) => r.error = Some(e.to_string()),
                }
            }
        }
    }

    fn register(&mut self, role: Role, profile: Profile, endpoint: Endpoint, r: &mut RpResult) {
        let exists = self
            .registrations
            .iter()
            .any(|g| g.role == role && g.endpoint == endpoint && g.profile.same_terms(&profile));
        if !exists {
            self.registrations.push(Registration {
                role,
                profile: profile.clone(),
                endpoint: endpoint.clone(),
            });
        }
        r.count = 1;
        let counterparts: Vec<Registration> = self
            .registrations
            .iter()
            .filter(|g| g.role != role)
            .filter(|g| match role {
                Role::Producer => matches(&profile, &g.profile),
                Role::Consumer => matches(&g.profile, &profile),
            })
            .cloned()
            .collect();
        for g in counterparts {
            let (prod, cons) = match role {
                Role::Producer => ((&endpoint, &profile), (&g.endpoint, &g.profile)),
                Role::Consumer => ((&g.endpoint, &g.profile), (&endpoint, &profile)),
            };
            let to_producer = Notification::Rendezvous {
                role: Role::Producer,
                counterpart: cons.0.clone(),
                counterpart_profile: cons.1.clone(),
                own_profile: prod.1.clone(),
                rp: self.me.id,
            };
            let to_consumer = Notification::Rendezvous {
                role: Role::Consumer,
                counterpart: prod.0.clone(),
                counterpart_profile: prod.1.clone(),
                own_profile: cons.1.clone(),
                rp: self.me.id,
            };
            let (pe, ce) = (prod.0.clone(), cons.0.clone());
            self.notify(&pe, to_producer);
            self.notify(&ce, to_consumer);
        }
    }

    fn notify_subscribers(&mut self, profile: &Profile, data: &[u8]) {
        let subs: Vec<Registration> = self
            .registrations
            .iter()
            .filter(|g| g.role == Role::Consumer && matches(profile, &g.profile))
            .cloned()
            .collect();
        for g in subs {
            let n = Notification::Data {
                subscription: g.profile.clone(),
                profile: profile.clone(),
                data: data.to_vec(),
                rp: self.me.id,
            };
            self.notify(&g.endpoint, n);
        }
    }

    fn notify(&mut self, to: &Endpoint, n: Notification) {
        self.send(to, Msg::Forward(Envelope::Notify(n)));
    }

    fn on_notification(&mut self, n: Notification) {
        let key = match &n {
            Notification::Rendezvous {
                role,
                counterpart,
                counterpart_profile,
                own_profile,
                ..
            } => format!(
                "r|{role:?}|{counterpart}|{}|{}",
                counterpart_profile.canonical(),
                own_profile.canonical()
            ),
            Notification::Data {
                subscription,
                profile,
                data,
                ..
            } => format!(
                "d|{}|{}",
                subscription.canonical(),
                hex(&content_digest(profile, data))
            ),
        };
        if !self.seen_notes.insert(key) {
            return;
        }
        self.counters.notifications += 1;
        let seq = self.notifications.len() as u64 + 1;
        self.notifications.push((seq, n.clone()));
        self.event(NodeEvent::Notified(n));
    }

    // ---- push and pull ----

    fn start_push(&mut self, req: u64, peer: Endpoint, profile: &Profile, records: Vec<Vec<u8>>) {
        let stream = stream_key(profile);
        let key = (peer.clone(), stream.clone());
        let st = self.pushes.entry(key.clone()).or_insert_with(|| PushState {
            session: PushSession::new(stream, peer),
            waiting: Vec::new(),
            retries: 0,
        });
        for r in records {
            st.session.enqueue(r);
        }
        let target = st.session.produced();
        st.waiting.push((req, target));
        st.retries = 0;
        self.pump(&key);
        self.resolve_push_waiters(&key);
    }

    fn pump(&mut self, key: &(Endpoint, String)) {
        let batch = self.cfg.push_batch.max(1);
        let producer = self.me.endpoint.clone();
        let Some(st) = self.pushes.get_mut(key) else { return };
        let mut frames = Vec::new();
        while let Some((seq, records)) = st.session.next_batch(batch) {
            frames.push(Msg::Push {
                stream: key.1.clone(),
                producer: producer.clone(),
                seq,
                records,
            });
        }
        let mark = st.session.acked();
        let pending = !st.session.is_drained();
        for f in frames {
            self.send(&key.0, f);
        }
        if pending {
            self.timer(self.cfg.rpc_timeout_ms * 2, Timer::PushRetry {
                peer: key.0.clone(),
                stream: key.1.clone(),
                mark,
            });
        }
    }

    fn resolve_push_waiters(&mut self, key: &(Endpoint, String)) {
        let Some(st) = self.pushes.get_mut(key) else { return };
        let acked = st.session.acked();
        let (done, keep): (Vec<_>, Vec<_>) = st.waiting.drain(..).partition(|(_, t)| *t <= acked);
        st.waiting = keep;
        for (req, _) in done {
            self.reply(req, ClientReply::Lines(vec![format!("pushed stream={} peer={} acked={acked}", key.1, key.0)]));
        }
    }

    fn on_push_retry(&mut self, peer: Endpoint, stream: String, mark: u64) {
        let key = (peer, stream);
        let max_retries = (self.cfg.op_timeout_ms / (self.cfg.rpc_timeout_ms * 2).max(1)).max(1) as u32;
        let Some(st) = self.pushes.get_mut(&key) else { return };
        if st.session.is_drained() || st.session.acked() != mark {
            return;
        }
        st.retries += 1;
        st.session.on_broken();
        if st.retries > max_retries {
            let acked = st.session.acked();
            let waiting: Vec<u64> = st.waiting.drain(..).map(|(r, _)| r).collect();
            st.retries = 0;
            for req in waiting {
                self.reply(req, ClientReply::Error(format!("stream broken: peer {} unreachable, resumable at {acked}", key.0)));
            }
            return;
        }
        self.pump(&key);
    }

    fn on_push_ack(&mut self, from: Contact, stream: String, next: u64) {
        let key = (from.endpoint, stream);
        let Some(st) = self.pushes.get_mut(&key) else { return };
        st.session.on_ack(next);
        st.retries = 0;
        self.resolve_push_waiters(&key);
    }

    fn on_push(&mut self, from: Contact, stream: String, producer: String, seq: u64, records: Vec<Vec<u8>>) {
        let cursor = format!("push:{producer}");
        if self.receiver.expected(&stream, &producer) == 0 {
            let persisted = self.storage.queues.committed(&stream, &cursor);
            self.receiver.resume(&stream, &producer, persisted);
        }
        let (fresh, next) = self.receiver.accept(&stream, &producer, seq, &records);
        let fresh = fresh.to_vec();
        let mut appended = Vec::with_capacity(fresh.len());
        let mut failed = None;
        for r in &fresh {
            match self.storage.queues.append(&stream, r, self.now) {
                Ok(off) => appended.push((off, r.clone())),
                Err(e) => {
                    failed = Some(e.to_string());
                    break;
                }
            }
        }
        let acked = next - (fresh.len() - appended.len()) as u64;
        if failed.is_some() {
            // make the producer resend what did not land
            self.receiver = StreamReceiver::new();
        }
        if let Err(e) = self.storage.queues.commit(&stream, &cursor, acked) {
            self.event(NodeEvent::Rejected(format!("push cursor: {e}")));
        }
        self.counters.records_in += appended.len() as u64;
        self.send(&from.endpoint, Msg::PushAck {
            stream: stream.clone(),
            producer,
            next: acked,
        });
        if let Some(e) = failed {
            self.event(NodeEvent::Rejected(format!("queue append failed: {e}")));
        }
        for (off, rec) in appended {
            self.run_rules(&stream, off, &rec);
        }
    }

    fn run_rules(&mut self, stream: &str, offset: u64, record: &[u8]) {
        if self.rules.rules().is_empty() {
            return;
        }
        let Ok(text) = std::str::from_utf8(record) else { return };
        let Ok(tuple) = DataTuple::from_json(text) else { return };
        let mut fired: Option<(String, Consequence)> = None;
        let now = self.now;
        let outcome = self.rules.evaluate_at(&tuple, now, now, &mut |rule: &Rule, _: &DataTuple| {
            fired = Some((rule.name.clone(), rule.consequence.clone()));
            Ok(())
        });
        let _ = outcome;
        let Some((name, consequence)) = fired else { return };
        self.counters.rules_fired += 1;
        self.event(NodeEvent::RuleFired {
            rule: name,
            stream: stream.to_string(),
            offset,
        });
        match consequence {
            Consequence::Post { action, profile } => {
                let msg = ARMessage::new(profile, action).with_data(record.to_vec());
                self.originate(Work::Post(msg), None);
            }
            Consequence::Callback(id) => self.event(NodeEvent::Callback {
                id,
                tuple: tuple.to_json(),
            }),
        }
    }

    /// Reads the next batch for `consumer`. The previous batch is committed
    /// first, so a consumer that crashes mid-batch sees it again.
    fn pull_local(&mut self, profile: &Profile, consumer: &str, max: u32) -> Result<(Vec<(u64, Vec<u8>)>, u64), String> {
        let stream = stream_key(profile);
        let key = (stream.clone(), consumer.to_string());
        let q = self.storage.queues.as_mut();
        let committed = q.committed(&stream, consumer);
        let pos = self.pull_pos.get(&key).copied().unwrap_or(committed).max(committed);
        if pos > committed {
            q.commit(&stream, consumer, pos).map_err(|e| e.to_string())?;
        }
        let records = q.read(&stream, pos, max as usize).map_err(|e| e.to_string())?;
        let next = records.last().map_or(pos, |r| r.0 + 1);
        self.pull_pos.insert(key, next);
        Ok((records, next))
    }

    pub fn status_lines(&self) -> Vec<String> {
        let s = self.storage.store.stats();
        let role = if self.is_master() { "master" } else { "member" };
        vec![
            format!("id={}", self.me.id.to_hex()),
            format!("endpoint={}", self.me.endpoint),
            format!("region={}", self.ring.region),
            format!("role={role}"),
            format!("master={}", self.ring.master.to_hex()),
            format!("ring={}", self.ring.members.len()),
            format!("ring_version={}", self.ring.version),
            format!("tree_version={}", self.tree.version),
            format!("leaves={}", self.tree.leaves().len()),
            format!("entries={}", s.entries),
            format!("puts={}", s.puts),
            format!("duplicates={}", s.duplicates),
            format!("evictions={}", s.evictions),
            format!("scans={}", s.scans),
            format!("hot_bytes={}", s.hot_bytes),
            format!("registrations={}", self.registrations.len()),
            format!("functions={}", self.storage.functions.len()),
            format!("running={}", self.running.len()),
            format!("streams={}", self.storage.queues.streams().len()),
            format!("rules_fired={}", self.counters.rules_fired),
        ]
    }
}

pub fn format_notification(seq: u64, n: &Notification) -> String {
    match n {
        Notification::Rendezvous {
            role,
            counterpart,
            counterpart_profile,
            own_profile,
            rp,
        } => format!(
            "{seq} rendezvous role={} counterpart={counterpart} counterpart_profile={counterpart_profile} own_profile={own_profile} rp={}",
            match role {
                Role::Producer => "producer",
                Role::Consumer => "consumer",
            },
            rp.short()
        ),
        Notification::Data {
            subscription,
            profile,
            data,
            rp,
        } => format!(
            "{seq} data subscription={subscription} profile={profile} bytes={} data={} rp={}",
            data.len(),
            hex(data),
            rp.short()
        ),
    }
}
