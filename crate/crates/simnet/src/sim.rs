use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rpmesh_core::ar::{ARMessage, FunctionRef, Profile};
use rpmesh_core::geo::GeoPoint;
use rpmesh_core::id::NodeId;
use rpmesh_core::overlay::{LeafInfo, QuadTreeSnapshot, RegionPath};
use rpmesh_core::rp::{Input, NodeEvent, OpId, Output, Receipt, RpConfig, RpNode, Storage, Timer};
use rpmesh_core::wire::FrameType;
use rpmesh_core::SpaceConfig;

use crate::trace::SimTrace;
use crate::ScenarioError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Latency {
    Fixed(u64),
    /// Uniform over `lo..=hi` virtual ms.
    Uniform { lo: u64, hi: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PartitionChange {
    /// Nodes in different groups cannot reach each other. Nodes not
    /// listed form one extra group.
    Split(Vec<BTreeSet<String>>),
    Heal,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub seed: u64,
    /// Nodes `n0..` that [`Sim::spawn_cluster`] joins.
    pub node_count: usize,
    pub latency: Latency,
    pub loss: f64,
    pub partitions: Vec<(u64, PartitionChange)>,
    pub rp: RpConfig,
    /// Geo position used for cluster nodes and scripted joins without one.
    pub origin: GeoPoint,
}

impl SimConfig {
    pub fn new(seed: u64) -> Self {
        SimConfig {
            seed,
            node_count: 0,
            latency: Latency::Uniform { lo: 1, hi: 5 },
            loss: 0.0,
            partitions: Vec::new(),
            rp: scaled_rp_config(SpaceConfig::default()),
            origin: GeoPoint::new(40.0583, -74.4056).expect("valid point"),
        }
    }

    pub fn with_nodes(mut self, n: usize) -> Self {
        self.node_count = n;
        self
    }

    pub fn with_space(mut self, space: SpaceConfig) -> Self {
        self.rp.space = space;
        self
    }
}

/// Timing scaled to the simulated 1–5 ms links.
pub fn scaled_rp_config(space: SpaceConfig) -> RpConfig {
    let mut c = RpConfig::new(space);
    c.keepalive_ms = 100;
    c.miss_threshold = 3;
    c.bootstrap_timeout_ms = 200;
    c.rpc_timeout_ms = 40;
    c.op_timeout_ms = 500;
    c
}

#[derive(Debug, Clone)]
enum Event {
    Deliver { to: String, from: String, kind: FrameType, bytes: Vec<u8> },
    Timer { node: String, life: u32, timer: Timer },
    Partition(PartitionChange),
}

pub struct SimNode {
    pub rp: RpNode,
    pub alive: bool,
    life: u32,
}

#[derive(Debug, Clone, Default)]
pub struct OpRecord {
    pub origin: String,
    pub started: u64,
    pub completed: Option<u64>,
    pub receipt: Option<Receipt>,
    /// Nodes that executed the operation as a rendezvous point.
    pub executed_by: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionRun {
    pub time: u64,
    pub node: String,
    pub instance: u64,
    pub function: FunctionRef,
    pub profile: Profile,
    pub input: Vec<u8>,
}

/// Result of checking the distributed invariants at one instant.
#[derive(Debug, Clone, Default)]
pub struct Checkpoint {
    pub time: u64,
    pub violations: Vec<String>,
    /// Live master of every region, by region.
    pub masters: BTreeMap<RegionPath, String>,
    /// Live node names per region.
    pub rings: BTreeMap<RegionPath, BTreeSet<String>>,
}

impl Checkpoint {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

type FunctionHook = Box<dyn FnMut(&FunctionRun)>;

/// A cluster of [`RpNode`]s on a virtual transport and clock.
pub struct Sim {
    cfg: SimConfig,
    now: u64,
    seq: u64,
    queue: BTreeMap<(u64, u64), Event>,
    nodes: BTreeMap<String, SimNode>,
    join_order: Vec<String>,
    groups: Option<BTreeMap<String, usize>>,
    rng: ChaCha8Rng,
    trace: SimTrace,
    ops: BTreeMap<OpId, OpRecord>,
    functions: Vec<FunctionRun>,
    hook: Option<FunctionHook>,
    pub trace_timers: bool,
}

impl Sim {
    pub fn new(cfg: SimConfig) -> Self {
        let mut sim = Sim {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            now: 0,
            seq: 0,
            queue: BTreeMap::new(),
            nodes: BTreeMap::new(),
            join_order: Vec::new(),
            groups: None,
            trace: SimTrace::default(),
            ops: BTreeMap::new(),
            functions: Vec::new(),
            hook: None,
            trace_timers: true,
            cfg,
        };
        for (t, change) in sim.cfg.partitions.clone() {
            sim.schedule(t, Event::Partition(change));
        }
        sim
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn trace(&self) -> &SimTrace {
        &self.trace
    }

    pub fn into_trace(self) -> SimTrace {
        self.trace
    }

    /// In-process stand-in for a function executor.
    pub fn on_function(&mut self, hook: impl FnMut(&FunctionRun) + 'static) {
        self.hook = Some(Box::new(hook));
    }

    pub fn function_runs(&self) -> &[FunctionRun] {
        &self.functions
    }

    pub fn node(&self, name: &str) -> Option<&RpNode> {
        self.nodes.get(name).map(|n| &n.rp)
    }

    pub fn node_mut(&mut self, name: &str) -> Option<&mut RpNode> {
        self.nodes.get_mut(name).map(|n| &mut n.rp)
    }

    pub fn is_alive(&self, name: &str) -> bool {
        self.nodes.get(name).is_some_and(|n| n.alive)
    }

    /// Live nodes in join order.
    pub fn live(&self) -> Vec<String> {
        self.join_order.iter().filter(|n| self.is_alive(n)).cloned().collect()
    }

    pub fn name_of(&self, id: &NodeId) -> Option<String> {
        self.nodes.iter().find(|(_, n)| n.rp.id() == *id).map(|(k, _)| k.clone())
    }

    pub fn ops(&self) -> &BTreeMap<OpId, OpRecord> {
        &self.ops
    }

    pub fn op(&self, op: &OpId) -> Option<&OpRecord> {
        self.ops.get(op)
    }

    pub fn receipt(&self, op: &OpId) -> Option<&Receipt> {
        self.ops.get(op).and_then(|r| r.receipt.as_ref())
    }

    fn schedule(&mut self, at: u64, e: Event) {
        self.seq += 1;
        self.queue.insert((at, self.seq), e);
    }

    fn link_delay(&mut self) -> u64 {
        match self.cfg.latency {
            Latency::Fixed(ms) => ms,
            Latency::Uniform { lo, hi } => self.rng.random_range(lo..=hi.max(lo)),
        }
    }

    fn reachable(&self, a: &str, b: &str) -> bool {
        match &self.groups {
            None => true,
            Some(g) => {
                let extra = usize::MAX;
                g.get(a).copied().unwrap_or(extra) == g.get(b).copied().unwrap_or(extra)
            }
        }
    }

    pub fn partition(&mut self, groups: Vec<BTreeSet<String>>) {
        self.apply_partition(PartitionChange::Split(groups));
    }

    pub fn heal(&mut self) {
        self.apply_partition(PartitionChange::Heal);
    }

    fn apply_partition(&mut self, change: PartitionChange) {
        match change {
            PartitionChange::Heal => {
                self.groups = None;
                self.trace.push(self.now, "heal", "", "", "", 0);
            }
            PartitionChange::Split(gs) => {
                let mut map = BTreeMap::new();
                for (i, g) in gs.iter().enumerate() {
                    for n in g {
                        map.insert(n.clone(), i);
                    }
                }
                self.groups = Some(map);
                self.trace.push(self.now, "partition", "", "", format!("{} groups", gs.len()), 0);
            }
        }
    }

    /// Creates a node and starts its bootstrap phase against up to three
    /// live members picked from the registry.
    pub fn join(&mut self, name: &str, geo: GeoPoint) -> Result<(), ScenarioError> {
        if self.nodes.get(name).is_some_and(|n| n.alive) {
            return Err(ScenarioError::DuplicateNode(name.to_string()));
        }
        let mut candidates: Vec<String> = self
            .live()
            .into_iter()
            .filter(|n| self.nodes[n].rp.is_running())
            .collect();
        let mut boots = Vec::new();
        while boots.len() < 3 && !candidates.is_empty() {
            let i = self.rng.random_range(0..candidates.len());
            boots.push(candidates.swap_remove(i));
        }
        let mut rp_cfg = self.cfg.rp.clone();
        rp_cfg.seed = self.cfg.seed;
        let storage = Storage::in_memory(rp_cfg.space);
        let rp = RpNode::new(rp_cfg, name, geo, self.cfg.seed, boots, storage);
        let life = self.nodes.get(name).map_or(0, |n| n.life + 1);
        self.nodes.insert(name.to_string(), SimNode { rp, alive: true, life });
        self.join_order.retain(|n| n != name);
        self.join_order.push(name.to_string());
        self.trace.push(self.now, "join", name, "", format!("{:.4} {:.4}", geo.lat, geo.lon), 0);
        self.input(name, Input::Start);
        Ok(())
    }

    /// Joins `node_count` nodes at the configured origin, one every 20 ms,
    /// then lets the overlay settle.
    pub fn spawn_cluster(&mut self) -> Result<Vec<String>, ScenarioError> {
        let names: Vec<String> = (0..self.cfg.node_count).map(|i| format!("n{i}")).collect();
        for n in &names {
            self.join(n, self.cfg.origin)?;
            self.run_for(20);
        }
        self.run_for(self.cfg.rp.keepalive_ms * 5);
        Ok(names)
    }

    pub fn kill(&mut self, name: &str) -> Result<(), ScenarioError> {
        let n = self.nodes.get_mut(name).ok_or_else(|| ScenarioError::UnknownNode(name.to_string()))?;
        if !n.alive {
            return Err(ScenarioError::DeadNode(name.to_string()));
        }
        n.alive = false;
        self.trace.push(self.now, "kill", name, "", "", 0);
        Ok(())
    }

    fn live_running(&self, name: &str) -> Result<(), ScenarioError> {
        let n = self.nodes.get(name).ok_or_else(|| ScenarioError::UnknownNode(name.to_string()))?;
        if !n.alive {
            return Err(ScenarioError::DeadNode(name.to_string()));
        }
        if !n.rp.is_running() {
            return Err(ScenarioError::NotJoined(name.to_string()));
        }
        Ok(())
    }

    pub fn post(&mut self, name: &str, msg: ARMessage) -> Result<OpId, ScenarioError> {
        self.live_running(name)?;
        let node = self.nodes.get_mut(name).expect("checked");
        let (op, out) = node.rp.post(self.now, msg);
        self.begin_op(name, op, "post");
        self.apply(name, out);
        Ok(op)
    }

    pub fn query(&mut self, name: &str, profile: Profile, location: Option<GeoPoint>) -> Result<OpId, ScenarioError> {
        self.live_running(name)?;
        let node = self.nodes.get_mut(name).expect("checked");
        let (op, out) = node.rp.query(self.now, profile, location);
        self.begin_op(name, op, "query");
        self.apply(name, out);
        Ok(op)
    }

    /// Sends a client command to a node as if from a local client.
    pub fn command(&mut self, name: &str, req: u64, cmd: rpmesh_core::rp::ClientCmd) -> Result<Vec<Output>, ScenarioError> {
        self.live_running(name)?;
        let node = self.nodes.get_mut(name).expect("checked");
        let out = node.rp.handle(self.now, Input::Command { req, cmd });
        let replies: Vec<Output> = out.iter().filter(|o| matches!(o, Output::Reply { .. })).cloned().collect();
        self.apply(name, out);
        Ok(replies)
    }

    fn begin_op(&mut self, name: &str, op: OpId, kind: &'static str) {
        self.trace.push(self.now, kind, name, "", op.to_string(), 0);
        let rec = self.ops.entry(op).or_default();
        rec.origin = name.to_string();
        rec.started = self.now;
    }

    /// Posts and runs the clock until the receipt arrives or `limit` ms pass.
    pub fn post_and_wait(&mut self, name: &str, msg: ARMessage, limit: u64) -> Result<Option<Receipt>, ScenarioError> {
        let op = self.post(name, msg)?;
        Ok(self.await_op(&op, limit))
    }

    pub fn query_and_wait(
        &mut self,
        name: &str,
        profile: Profile,
        location: Option<GeoPoint>,
        limit: u64,
    ) -> Result<Option<Receipt>, ScenarioError> {
        let op = self.query(name, profile, location)?;
        Ok(self.await_op(&op, limit))
    }

    pub fn await_op(&mut self, op: &OpId, limit: u64) -> Option<Receipt> {
        let deadline = self.now + limit;
        loop {
            if let Some(r) = self.receipt(op) {
                return Some(r.clone());
            }
            match self.queue.first_key_value() {
                Some((&(t, _), _)) if t <= deadline => self.step(),
                _ => {
                    self.now = deadline;
                    return self.receipt(op).cloned();
                }
            };
        }
    }

    fn input(&mut self, name: &str, input: Input) {
        let Some(n) = self.nodes.get_mut(name) else { return };
        if !n.alive {
            return;
        }
        let out = n.rp.handle(self.now, input);
        self.apply(name, out);
    }

    fn apply(&mut self, name: &str, out: Vec<Output>) {
        let life = self.nodes[name].life;
        for o in out {
            match o {
                Output::Send { to, kind, bytes } => {
                    self.trace.push(self.now, "send", name, &to, kind.name(), 0);
                    let lost = self.cfg.loss > 0.0 && self.rng.random_bool(self.cfg.loss.clamp(0.0, 1.0));
                    if lost || !self.reachable(name, &to) || !self.nodes.contains_key(&to) {
                        self.trace.push(self.now, "drop", name, &to, kind.name(), 0);
                        continue;
                    }
                    let at = self.now + self.link_delay();
                    self.schedule(at, Event::Deliver {
                        to,
                        from: name.to_string(),
                        kind,
                        bytes,
                    });
                }
                Output::SetTimer { after_ms, timer } => {
                    let at = self.now + after_ms.max(1);
                    self.schedule(at, Event::Timer {
                        node: name.to_string(),
                        life,
                        timer,
                    });
                }
                Output::Reply { .. } => {}
                Output::StartFunction {
                    instance,
                    function,
                    profile,
                    input,
                } => {
                    let run = FunctionRun {
                        time: self.now,
                        node: name.to_string(),
                        instance,
                        function,
                        profile,
                        input,
                    };
                    self.trace.push(self.now, "function", name, "", run.function.name.clone(), 0);
                    if let Some(h) = self.hook.as_mut() {
                        h(&run);
                    }
                    self.functions.push(run);
                }
                Output::StopFunction { instance } => {
                    self.trace.push(self.now, "function_stop", name, "", instance.to_string(), 0);
                }
                Output::Event(e) => self.on_event(name, e),
            }
        }
    }

    fn on_event(&mut self, name: &str, e: NodeEvent) {
        let now = self.now;
        match e {
            NodeEvent::Executed { op, .. } => {
                self.trace.push(now, "executed", name, "", op.to_string(), 0);
                self.ops.entry(op).or_default().executed_by.insert(name.to_string());
            }
            NodeEvent::Completed(r) => {
                let hops = r.master_hops + r.lookup_hops;
                self.trace.push(now, "completed", name, "", r.op.to_string(), hops);
                let rec = self.ops.entry(r.op).or_default();
                if rec.receipt.is_none() {
                    rec.completed = Some(now);
                    rec.receipt = Some(r);
                }
            }
            NodeEvent::Joined { region, .. } => self.trace.push(now, "state", name, "", format!("joined region={region}"), 0),
            NodeEvent::BecameMaster { region, version } => {
                self.trace.push(now, "state", name, "", format!("master region={region} version={version}"), 0)
            }
            NodeEvent::Split { region } => self.trace.push(now, "state", name, "", format!("split region={region}"), 0),
            NodeEvent::Evicted { peer } => {
                let who = self.name_of(&peer).unwrap_or_else(|| peer.short());
                self.trace.push(now, "state", name, &who, "evicted", 0)
            }
            NodeEvent::Notified(_) => self.trace.push(now, "notified", name, "", "", 0),
            NodeEvent::RuleFired { rule, offset, .. } => {
                self.trace.push(now, "rule", name, "", format!("{rule}@{offset}"), 0)
            }
            NodeEvent::Callback { id, .. } => self.trace.push(now, "callback", name, "", id, 0),
            NodeEvent::Rejected(why) => self.trace.push(now, "rejected", name, "", why, 0),
            NodeEvent::Fatal(why) => {
                self.trace.push(now, "fatal", name, "", why, 0);
                if let Some(n) = self.nodes.get_mut(name) {
                    n.alive = false;
                }
            }
        }
    }

    /// Processes the earliest pending event.
    pub fn step(&mut self) {
        let Some(((t, _), e)) = self.queue.pop_first() else { return };
        self.now = self.now.max(t);
        match e {
            Event::Deliver { to, from, kind, bytes } => {
                if !self.is_alive(&to) || !self.reachable(&from, &to) {
                    self.trace.push(self.now, "drop", &from, &to, kind.name(), 0);
                    return;
                }
                self.trace.push(self.now, "deliver", &from, &to, kind.name(), 0);
                self.input(&to, Input::Frame(bytes));
            }
            Event::Timer { node, life, timer } => {
                if self.nodes.get(&node).is_none_or(|n| !n.alive || n.life != life) {
                    return;
                }
                if self.trace_timers {
                    self.trace.push(self.now, "timer", &node, "", timer_name(&timer), 0);
                }
                self.input(&node, Input::Timer(timer));
            }
            Event::Partition(change) => self.apply_partition(change),
        }
    }

    /// Runs every event due up to and including `t`.
    pub fn run_until(&mut self, t: u64) {
        while let Some((&(at, _), _)) = self.queue.first_key_value() {
            if at > t {
                break;
            }
            self.step();
        }
        self.now = self.now.max(t);
    }

    pub fn run_for(&mut self, ms: u64) {
        let t = self.now + ms;
        self.run_until(t);
    }

    /// Checks the partition and single-master invariants over live nodes.
    pub fn checkpoint(&mut self) -> Checkpoint {
        let mut cp = Checkpoint {
            time: self.now,
            ..Checkpoint::default()
        };
        let live = self.live();
        for n in &live {
            let rp = &self.nodes[n].rp;
            if !rp.is_running() {
                cp.violations.push(format!("{n} has not joined"));
                continue;
            }
            cp.rings.entry(rp.region().clone()).or_default().insert(n.clone());
            if rp.is_master() {
                if let Some(prev) = cp.masters.insert(rp.region().clone(), n.clone()) {
                    cp.violations.push(format!("region {} has masters {prev} and {n}", rp.region()));
                }
            }
        }
        let mut leaves = BTreeMap::new();
        for (region, m) in &cp.masters {
            let rp = &self.nodes[m].rp;
            leaves.insert(region.clone(), LeafInfo {
                master: rp.id(),
                master_endpoint: m.clone(),
                ring_size: rp.ring().members.len() as u32,
                epoch: 0,
            });
        }
        let tree = QuadTreeSnapshot::from_leaves(0, leaves);
        if !tree.is_tiling() {
            cp.violations.push(format!(
                "leaf regions {:?} do not tile the root box",
                cp.masters.keys().map(|r| r.to_string()).collect::<Vec<_>>()
            ));
        }
        for (region, names) in &cp.rings {
            let Some(master) = cp.masters.get(region) else {
                cp.violations.push(format!("region {region} has no live master"));
                continue;
            };
            let mrp = &self.nodes[master].rp;
            let listed: BTreeSet<NodeId> = mrp.ring().members.iter().map(|m| m.id).collect();
            for n in names {
                let rp = &self.nodes[n].rp;
                if rp.ring().master != mrp.id() {
                    cp.violations.push(format!("{n} in {region} follows a different master than {master}"));
                }
                if !listed.contains(&rp.id()) {
                    cp.violations.push(format!("{n} is missing from the ring of {region}"));
                }
                if tree.is_tiling() && tree.leaf_for(rp.geo()).as_ref() != Some(region) {
                    cp.violations.push(format!("{n} sits outside its region {region}"));
                }
            }
        }
        let summary = if cp.is_ok() {
            "ok".to_string()
        } else {
            format!("{} violations", cp.violations.len())
        };
        self.trace.push(self.now, "checkpoint", "", "", summary, 0);
        cp
    }

    /// Advances the clock until a checkpoint passes or `limit` ms elapse.
    pub fn settle(&mut self, limit: u64) -> Checkpoint {
        let deadline = self.now + limit;
        let step = self.cfg.rp.keepalive_ms.max(1);
        loop {
            let cp = self.checkpoint_quiet();
            if cp.is_ok() || self.now >= deadline {
                return cp;
            }
            self.run_for(step.min(deadline - self.now));
        }
    }

    fn checkpoint_quiet(&mut self) -> Checkpoint {
        let cp = self.checkpoint();
        self.trace.events.pop();
        cp
    }
}

fn timer_name(t: &Timer) -> &'static str {
    match t {
        Timer::Tick => "tick",
        Timer::JoinTimeout(_) => "join_timeout",
        Timer::Rpc { .. } => "rpc_timeout",
        Timer::Coordinate(_) => "coordinate_timeout",
        Timer::Origin(_) => "origin_timeout",
        Timer::ElectionProbe(_) => "election_probe",
        Timer::PushRetry { .. } => "push_retry",
        Timer::PullTimeout(_) => "pull_timeout",
    }
}
