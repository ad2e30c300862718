//! One rendezvous point over real sockets.

use std::collections::{BTreeMap, HashMap};
use std::io::{self, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rpmesh_core::id::NodeId;
use rpmesh_core::mmq::QueueConfig;
use rpmesh_core::overlay::Contact;
use rpmesh_core::rp::{DirQueues, Envelope, Input, Msg, NodeEvent, Output, Packet, RpConfig, RpNode, Storage, Timer};
use rpmesh_core::rules::parse_rule_file;
use rpmesh_core::store::{Store, StoreConfig};

use crate::config::NodeConfig;
use crate::executor::{Exit, Executor};
use crate::net::{FrameReader, Peers};

#[derive(Debug, thiserror::Error)]
pub enum DaemonError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Network(String),
    #[error("{0}")]
    CorruptState(String),
}

impl DaemonError {
    pub fn exit_code(&self) -> i32 {
        match self {
            DaemonError::Usage(_) => 1,
            DaemonError::Network(_) => 2,
            DaemonError::CorruptState(_) => 3,
        }
    }
}

enum Event {
    Opened(u64, TcpStream),
    Frame(u64, Vec<u8>),
    Closed(u64),
    Exited(Exit),
}

/// Reads the node salt, creating it on first start so the id survives
/// restarts.
fn load_salt(data: &Path) -> Result<u64, DaemonError> {
    let path = data.join("salt");
    match std::fs::read_to_string(&path) {
        Ok(s) => u64::from_str_radix(s.trim(), 16)
            .map_err(|_| DaemonError::CorruptState(format!("{} is not a hex salt", path.display()))),
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            let salt: u64 = rand::random();
            std::fs::write(&path, format!("{salt:016x}\n"))
                .map_err(|e| DaemonError::CorruptState(format!("cannot write {}: {e}", path.display())))?;
            Ok(salt)
        }
        Err(e) => Err(DaemonError::CorruptState(format!("cannot read {}: {e}", path.display()))),
    }
}

fn open_storage(cfg: &NodeConfig) -> Result<Storage, DaemonError> {
    let corrupt = |what: &str, e: &dyn std::fmt::Display| DaemonError::CorruptState(format!("{what}: {e}"));
    let store = Store::open(&cfg.data.join("store"), StoreConfig::new(cfg.space)).map_err(|e| corrupt("store", &e))?;
    let functions =
        Store::open(&cfg.data.join("functions"), StoreConfig::new(cfg.space)).map_err(|e| corrupt("function store", &e))?;
    let queues = DirQueues::open(cfg.data.join("queues"), QueueConfig::default()).map_err(|e| corrupt("queues", &e))?;
    Ok(Storage {
        store,
        functions,
        queues: Box::new(queues),
    })
}

fn accept_loop(listener: TcpListener, tx: Sender<Event>) {
    let mut next = 0u64;
    for stream in listener.incoming() {
        let Ok(stream) = stream else { continue };
        let _ = stream.set_nodelay(true);
        next += 1;
        let conn = next;
        let Ok(writer) = stream.try_clone() else { continue };
        if tx.send(Event::Opened(conn, writer)).is_err() {
            return;
        }
        let tx = tx.clone();
        let _ = thread::Builder::new().name(format!("rx {conn}")).spawn(move || {
            let mut r = FrameReader::new(stream);
            while let Ok(Some(f)) = r.next_frame() {
                if tx.send(Event::Frame(conn, f)).is_err() {
                    return;
                }
            }
            let _ = tx.send(Event::Closed(conn));
        });
    }
}

fn log(line: impl AsRef<str>) {
    let _ = writeln!(io::stderr(), "rpmesh: {}", line.as_ref());
}

/// Runs until `stop` is raised, then flushes state and returns.
pub fn run(cfg: NodeConfig, stop: Arc<AtomicBool>) -> Result<(), DaemonError> {
    std::fs::create_dir_all(&cfg.data)
        .map_err(|e| DaemonError::CorruptState(format!("data directory {}: {e}", cfg.data.display())))?;
    let rules = match &cfg.rules {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| DaemonError::Usage(format!("rule file {}: {e}", p.display())))?;
            parse_rule_file(&text).map_err(|e| DaemonError::Usage(format!("rule file {}: {e}", p.display())))?
        }
        None => Vec::new(),
    };
    let salt = load_salt(&cfg.data)?;
    let storage = open_storage(&cfg)?;
    let listener = TcpListener::bind(&cfg.listen)
        .map_err(|e| DaemonError::Network(format!("cannot listen on {}: {e}", cfg.listen)))?;

    let mut rp = RpConfig::new(cfg.space);
    rp.capacity = cfg.capacity;
    rp.replicas = cfg.replicas;
    rp.keepalive_ms = cfg.keepalive_ms;
    rp.bootstrap_timeout_ms = cfg.keepalive_ms * 3 / 2;
    rp.rpc_timeout_ms = (cfg.keepalive_ms / 2).max(200);
    rp.op_timeout_ms = cfg.keepalive_ms * 5 / 2;
    rp.seed = salt;
    let digest = cfg.space.digest();
    let mut node = RpNode::new(rp, cfg.advertise.clone(), cfg.geo, salt, cfg.bootstrap.clone(), storage);
    node.set_rules(rules);
    log(format!("node {} listening on {}", node.id().to_hex(), cfg.listen));

    let (tx, rx) = mpsc::channel();
    let (exit_tx, exit_rx) = mpsc::channel::<Exit>();
    {
        let tx = tx.clone();
        thread::Builder::new()
            .name("exits".into())
            .spawn(move || {
                for e in exit_rx {
                    if tx.send(Event::Exited(e)).is_err() {
                        return;
                    }
                }
            })
            .map_err(|e| DaemonError::Network(e.to_string()))?;
    }
    let executor = Executor::new(&cfg.data.join("executor.log"), cfg.allow.clone(), cfg.workers, exit_tx)
        .map_err(|e| DaemonError::CorruptState(format!("executor log: {e}")))?;
    {
        let tx = tx.clone();
        thread::Builder::new()
            .name("accept".into())
            .spawn(move || accept_loop(listener, tx))
            .map_err(|e| DaemonError::Network(e.to_string()))?;
    }
    drop(tx);

    let epoch = Instant::now();
    let now = || epoch.elapsed().as_millis() as u64;
    let mut timers: BTreeMap<(u64, u64), Timer> = BTreeMap::new();
    let mut timer_seq = 0u64;
    let mut peers = Peers::default();
    let mut conns: HashMap<u64, TcpStream> = HashMap::new();
    // daemon request id -> (connection, client request id)
    let mut pending: HashMap<u64, (u64, u64)> = HashMap::new();
    let mut next_req = 0u64;
    let me = Contact::new(NodeId::ZERO, cfg.advertise.clone());

    let mut outputs = node.handle(now(), Input::Start);
    loop {
        for out in outputs.drain(..) {
            match out {
                Output::Send { to, bytes, .. } => peers.send(&to, bytes),
                Output::SetTimer { after_ms, timer } => {
                    timer_seq += 1;
                    timers.insert((now() + after_ms, timer_seq), timer);
                }
                Output::Reply { req, reply } => {
                    let Some((conn, client_req)) = pending.remove(&req) else { continue };
                    let packet = Packet::new(me.clone(), Msg::Forward(Envelope::Reply { req: client_req, reply }));
                    let bytes = match packet.encode(&digest) {
                        Ok(b) => b,
                        Err(e) => {
                            log(format!("cannot encode reply: {e}"));
                            continue;
                        }
                    };
                    if let Some(s) = conns.get_mut(&conn) {
                        if s.write_all(&bytes).is_err() {
                            conns.remove(&conn);
                        }
                    }
                }
                Output::StartFunction {
                    instance,
                    function,
                    profile,
                    input,
                } => executor.start(instance, function, profile, input),
                Output::StopFunction { instance } => executor.stop(instance),
                Output::Event(e) => match e {
                    NodeEvent::Fatal(msg) => {
                        log(format!("fatal: {msg}"));
                        let _ = node.flush();
                        return Err(DaemonError::Network(msg));
                    }
                    NodeEvent::Joined { region, master } => {
                        log(format!("joined region={region} master={}", master.short()))
                    }
                    NodeEvent::BecameMaster { region, version } => {
                        log(format!("master of region={region} version={version}"))
                    }
                    NodeEvent::Split { region } => log(format!("split region={region}")),
                    NodeEvent::Evicted { peer } => log(format!("evicted {}", peer.short())),
                    NodeEvent::RuleFired { rule, stream, offset } => {
                        log(format!("rule {rule} fired on {stream}@{offset}"))
                    }
                    NodeEvent::Rejected(msg) => log(format!("rejected: {msg}")),
                    _ => {}
                },
            }
        }
        if stop.load(Ordering::Relaxed) {
            log("shutting down");
            return node
                .flush()
                .map_err(|e| DaemonError::CorruptState(format!("flush on shutdown: {e}")));
        }
        let t = now();
        if let Some((&(due, seq), _)) = timers.first_key_value() {
            if due <= t {
                let timer = timers.remove(&(due, seq)).expect("present");
                outputs = node.handle(t, Input::Timer(timer));
                continue;
            }
        }
        let wait = timers
            .first_key_value()
            .map_or(100, |(&(due, _), _)| due.saturating_sub(t))
            .min(100);
        let event = match rx.recv_timeout(Duration::from_millis(wait)) {
            Ok(e) => e,
            Err(RecvTimeoutError::Timeout) => continue,
            Err(RecvTimeoutError::Disconnected) => return Err(DaemonError::Network("listener stopped".into())),
        };
        let t = now();
        outputs = match event {
            Event::Opened(conn, s) => {
                conns.insert(conn, s);
                Vec::new()
            }
            Event::Closed(conn) => {
                conns.remove(&conn);
                Vec::new()
            }
            Event::Exited(Exit { instance, ok }) => node.handle(t, Input::FunctionExited { instance, ok }),
            Event::Frame(conn, bytes) => match Packet::decode(&bytes, &digest) {
                Ok(Packet {
                    msg: Msg::Forward(Envelope::Request { req, cmd }),
                    ..
                }) => {
                    next_req += 1;
                    pending.insert(next_req, (conn, req));
                    node.handle(t, Input::Command { req: next_req, cmd })
                }
                _ => node.handle(t, Input::Frame(bytes)),
            },
        };
    }
}
