//! Hirschberg–Sinclair leader election over members ordered by id.
//!
//! Each candidate probes distance 1, 2, 4, ... in both directions; a probe
//! survives only through members with smaller ids. A candidate whose probe
//! returns to itself has the largest id and wins.

use crate::id::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Toward the next larger id, wrapping.
    Successor,
    Predecessor,
}

impl Direction {
    pub fn reverse(self) -> Direction {
        match self {
            Direction::Successor => Direction::Predecessor,
            Direction::Predecessor => Direction::Successor,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Direction::Successor => 0,
            Direction::Predecessor => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Direction> {
        match c {
            0 => Some(Direction::Successor),
            1 => Some(Direction::Predecessor),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ElectionMsg {
    Probe {
        candidate: NodeId,
        phase: u32,
        hops: u32,
        dir: Direction,
    },
    Reply {
        candidate: NodeId,
        phase: u32,
        dir: Direction,
    },
}

/// One member's view of one election epoch.
#[derive(Debug, Clone)]
pub struct Election {
    me: NodeId,
    ring: Vec<NodeId>,
    pos: usize,
    pub epoch: u64,
    started: bool,
    phase: u32,
    replies: u8,
    won: bool,
    probes_sent: u64,
}

pub type Outgoing = Vec<(NodeId, ElectionMsg)>;

impl Election {
    /// `ring` holds every participant including `me`, in any order.
    pub fn new(me: NodeId, mut ring: Vec<NodeId>, epoch: u64) -> Self {
        ring.push(me);
        ring.sort();
        ring.dedup();
        let pos = ring.binary_search(&me).unwrap_or(0);
        Election {
            me,
            ring,
            pos,
            epoch,
            started: false,
            phase: 0,
            replies: 0,
            won: false,
            probes_sent: 0,
        }
    }

    pub fn participants(&self) -> &[NodeId] {
        &self.ring
    }

    pub fn neighbor(&self, dir: Direction) -> NodeId {
        let n = self.ring.len();
        match dir {
            Direction::Successor => self.ring[(self.pos + 1) % n],
            Direction::Predecessor => self.ring[(self.pos + n - 1) % n],
        }
    }

    pub fn has_won(&self) -> bool {
        self.won
    }

    pub fn is_started(&self) -> bool {
        self.started
    }

    /// Probe and reply messages this member has originated or relayed.
    pub fn messages_sent(&self) -> u64 {
        self.probes_sent
    }

    fn emit(&mut self, out: &mut Outgoing, dir: Direction, msg: ElectionMsg) {
        self.probes_sent += 1;
        out.push((self.neighbor(dir), msg));
    }

    fn probe_both(&mut self, out: &mut Outgoing) {
        for dir in [Direction::Successor, Direction::Predecessor] {
            let msg = ElectionMsg::Probe {
                candidate: self.me,
                phase: self.phase,
                hops: 1,
                dir,
            };
            self.emit(out, dir, msg);
        }
    }

    /// Becomes a candidate. A ring of one wins at once.
    pub fn start(&mut self) -> Outgoing {
        let mut out = Vec::new();
        if self.started {
            return out;
        }
        self.started = true;
        if self.ring.len() == 1 {
            self.won = true;
            return out;
        }
        self.probe_both(&mut out);
        out
    }

    pub fn on_message(&mut self, msg: ElectionMsg) -> Outgoing {
        let mut out = Vec::new();
        if self.won {
            return out;
        }
        match msg {
            ElectionMsg::Probe {
                candidate,
                phase,
                hops,
                dir,
            } => {
                if candidate == self.me {
                    self.won = true;
                    return out;
                }
                if candidate < self.me {
                    if !self.started {
                        out = self.start();
                    }
                    return out;
                }
                if hops < 1u32.checked_shl(phase).unwrap_or(u32::MAX) {
                    let fwd = ElectionMsg::Probe {
                        candidate,
                        phase,
                        hops: hops + 1,
                        dir,
                    };
                    self.emit(&mut out, dir, fwd);
                } else {
                    let back = dir.reverse();
                    let reply = ElectionMsg::Reply {
                        candidate,
                        phase,
                        dir: back,
                    };
                    self.emit(&mut out, back, reply);
                }
                // a larger candidate passed through: stop competing
                self.started = true;
            }
            ElectionMsg::Reply {
                candidate,
                phase,
                dir,
            } => {
                if candidate != self.me {
                    let fwd = ElectionMsg::Reply {
                        candidate,
                        phase,
                        dir,
                    };
                    self.emit(&mut out, dir, fwd);
                    return out;
                }
                if phase != self.phase {
                    return out;
                }
                self.replies += 1;
                if self.replies == 2 {
                    self.replies = 0;
                    self.phase += 1;
                    self.probe_both(&mut out);
                }
            }
        }
        out
    }
}

/// Upper bound on election messages for a ring of `m`.
pub fn message_bound(m: usize) -> u64 {
    let m = m.max(1) as f64;
    (8.0 * m * (1.0 + m.log2())).ceil() as u64
}
