//! XOR-metric routing table and the iterative lookup state machine.

use std::collections::{BTreeMap, HashSet};

use crate::id::{Endpoint, NodeId, ID_BITS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contact {
    pub id: NodeId,
    pub endpoint: Endpoint,
}

impl Contact {
    pub fn new(id: NodeId, endpoint: impl Into<Endpoint>) -> Self {
        Contact {
            id,
            endpoint: endpoint.into(),
        }
    }
}

/// Buckets by shared-prefix length with the local id; each holds at most
/// `k` contacts, oldest first.
#[derive(Debug, Clone)]
pub struct RoutingTable {
    local: NodeId,
    k: usize,
    buckets: Vec<Vec<Contact>>,
}

impl RoutingTable {
    pub fn new(local: NodeId, k: usize) -> Self {
        RoutingTable {
            local,
            k: k.max(1),
            buckets: vec![Vec::new(); ID_BITS as usize],
        }
    }

    pub fn local(&self) -> NodeId {
        self.local
    }

    fn bucket_of(&self, id: &NodeId) -> Option<usize> {
        let lz = self.local.distance(id).leading_zeros();
        (lz < ID_BITS).then_some(lz as usize)
    }

    /// Inserts or refreshes a contact. Returns false when the bucket is
    /// full and the contact was not added.
    pub fn insert(&mut self, contact: Contact) -> bool {
        let Some(b) = self.bucket_of(&contact.id) else {
            return false;
        };
        let bucket = &mut self.buckets[b];
        if let Some(pos) = bucket.iter().position(|c| c.id == contact.id) {
            bucket.remove(pos);
            bucket.push(contact);
            return true;
        }
        if bucket.len() >= self.k {
            return false;
        }
        bucket.push(contact);
        true
    }

    pub fn remove(&mut self, id: &NodeId) -> bool {
        let Some(b) = self.bucket_of(id) else {
            return false;
        };
        let bucket = &mut self.buckets[b];
        let before = bucket.len();
        bucket.retain(|c| c.id != *id);
        before != bucket.len()
    }

    pub fn contains(&self, id: &NodeId) -> bool {
        self.bucket_of(id)
            .is_some_and(|b| self.buckets[b].iter().any(|c| c.id == *id))
    }

    pub fn len(&self) -> usize {
        self.buckets.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&mut self) {
        self.buckets.iter_mut().for_each(Vec::clear);
    }

    pub fn contacts(&self) -> impl Iterator<Item = &Contact> {
        self.buckets.iter().flatten()
    }

    /// The `n` known contacts closest to `target`.
    pub fn closest(&self, target: &NodeId, n: usize) -> Vec<Contact> {
        let mut all: Vec<&Contact> = self.contacts().collect();
        all.sort_by_key(|c| c.id.distance(target));
        all.into_iter().take(n).cloned().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Probe {
    Fresh,
    InFlight,
    Answered,
    Failed,
}

/// One iterative lookup. The owner sends the requests this returns, feeds
/// back replies or timeouts, and reads the result once `is_done`.
#[derive(Debug, Clone)]
pub struct Lookup {
    target: NodeId,
    want: usize,
    width: usize,
    alpha: usize,
    shortlist: BTreeMap<NodeId, (Contact, Probe, u32)>,
    rounds: u32,
}

impl Lookup {
    /// `want` results, `width` candidates kept converging, `alpha` requests
    /// in flight. `local` is answered already with its own contacts.
    pub fn new(
        target: NodeId,
        want: usize,
        width: usize,
        alpha: usize,
        local: Contact,
        seeds: Vec<Contact>,
    ) -> Self {
        let mut l = Lookup {
            target,
            want: want.max(1),
            width: width.max(want).max(1),
            alpha: alpha.max(1),
            shortlist: BTreeMap::new(),
            rounds: 0,
        };
        l.shortlist
            .insert(local.id.distance(&target), (local, Probe::Answered, 0));
        for c in seeds {
            l.add(c, 1);
        }
        l
    }

    fn add(&mut self, c: Contact, depth: u32) {
        let d = c.id.distance(&self.target);
        self.shortlist.entry(d).or_insert((c, Probe::Fresh, depth));
    }

    pub fn target(&self) -> NodeId {
        self.target
    }

    /// Candidates still in the running, closest first.
    fn live(&self) -> impl Iterator<Item = &(Contact, Probe, u32)> {
        self.shortlist.values().filter(|e| e.1 != Probe::Failed)
    }

    /// Contacts to query next.
    pub fn next_requests(&mut self) -> Vec<Contact> {
        let in_flight = self.live().filter(|e| e.1 == Probe::InFlight).count();
        let budget = self.alpha.saturating_sub(in_flight);
        let picks: Vec<NodeId> = self
            .shortlist
            .iter()
            .filter(|(_, e)| e.1 != Probe::Failed)
            .take(self.width)
            .filter(|(_, e)| e.1 == Probe::Fresh)
            .take(budget)
            .map(|(d, _)| *d)
            .collect();
        let mut out = Vec::with_capacity(picks.len());
        for d in picks {
            if let Some(e) = self.shortlist.get_mut(&d) {
                e.1 = Probe::InFlight;
                self.rounds = self.rounds.max(e.2);
                out.push(e.0.clone());
            }
        }
        out
    }

    pub fn on_reply(&mut self, from: &NodeId, contacts: Vec<Contact>) {
        let d = from.distance(&self.target);
        let depth = match self.shortlist.get_mut(&d) {
            Some(e) if e.1 == Probe::InFlight => {
                e.1 = Probe::Answered;
                e.2
            }
            _ => return,
        };
        for c in contacts {
            self.add(c, depth + 1);
        }
    }

    pub fn on_timeout(&mut self, from: &NodeId) {
        let d = from.distance(&self.target);
        if let Some(e) = self.shortlist.get_mut(&d) {
            if e.1 == Probe::InFlight {
                e.1 = Probe::Failed;
            }
        }
    }

    pub fn is_in_flight(&self, id: &NodeId) -> bool {
        self.shortlist
            .get(&id.distance(&self.target))
            .is_some_and(|e| e.1 == Probe::InFlight)
    }

    /// Done when the closest `width` live candidates have all answered.
    pub fn is_done(&self) -> bool {
        self.live()
            .take(self.width)
            .all(|e| e.1 == Probe::Answered)
    }

    /// Sequential request depth reached so far.
    pub fn hops(&self) -> u32 {
        self.rounds
    }

    /// The closest answered contacts.
    pub fn result(&self) -> Vec<Contact> {
        self.live()
            .filter(|e| e.1 == Probe::Answered)
            .take(self.want)
            .map(|e| e.0.clone())
            .collect()
    }

    pub fn failed(&self) -> HashSet<NodeId> {
        self.shortlist
            .values()
            .filter(|e| e.1 == Probe::Failed)
            .map(|e| e.0.id)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<NodeId> {
        (0..n).map(|i| NodeId::derive("n", i as u64)).collect()
    }

    #[test]
    fn buckets_cap_at_k() {
        let local = NodeId::ZERO;
        let mut t = RoutingTable::new(local, 2);
        // all of these share no prefix bit with zero: bucket 0
        let far: Vec<NodeId> = (1..=3u8)
            .map(|i| {
                let mut b = [0u8; 20];
                b[0] = 0x80 | i;
                NodeId(b)
            })
            .collect();
        assert!(t.insert(Contact::new(far[0], "a")));
        assert!(t.insert(Contact::new(far[1], "b")));
        assert!(!t.insert(Contact::new(far[2], "c")));
        assert!(t.insert(Contact::new(far[0], "a2")));
        assert_eq!(t.len(), 2);
        assert!(t.remove(&far[1]));
        assert!(!t.contains(&far[1]));
        assert!(!t.insert(Contact::new(local, "self")));
    }

    #[test]
    fn closest_orders_by_xor() {
        let all = ids(30);
        let mut t = RoutingTable::new(all[0], 40);
        for (i, id) in all.iter().enumerate().skip(1) {
            t.insert(Contact::new(*id, format!("e{i}")));
        }
        let target = NodeId::derive("target", 0);
        let got: Vec<NodeId> = t.closest(&target, 5).into_iter().map(|c| c.id).collect();
        let mut want: Vec<NodeId> = all[1..].to_vec();
        want.sort_by_key(|id| id.distance(&target));
        assert_eq!(got, want[..5].to_vec());
    }

    #[test]
    fn singleton_lookup_is_immediate() {
        let me = Contact::new(NodeId::derive("me", 0), "me");
        let mut l = Lookup::new(NodeId::derive("k", 0), 3, 8, 3, me.clone(), vec![]);
        assert!(l.next_requests().is_empty());
        assert!(l.is_done());
        assert_eq!(l.result(), vec![me]);
        assert_eq!(l.hops(), 0);
    }

    #[test]
    fn failed_contacts_drop_out() {
        let me = Contact::new(NodeId::derive("me", 0), "me");
        let other = Contact::new(NodeId::derive("o", 0), "o");
        let mut l = Lookup::new(NodeId::derive("k", 0), 3, 8, 3, me.clone(), vec![other.clone()]);
        let reqs = l.next_requests();
        assert_eq!(reqs, vec![other.clone()]);
        assert!(!l.is_done());
        l.on_timeout(&other.id);
        assert!(l.is_done());
        assert_eq!(l.result(), vec![me]);
        assert!(l.failed().contains(&other.id));
    }
}
