//! A store that is a vector.

use std::collections::BTreeSet;

use rpmesh_core::ar::Profile;

use crate::matcher::satisfies;

#[derive(Debug, Clone, Default)]
pub struct LinearStore {
    entries: Vec<(Profile, Vec<u8>)>,
    keys: BTreeSet<(String, Vec<u8>)>,
}

impl LinearStore {
    pub fn new() -> Self {
        LinearStore::default()
    }

    /// False when an identical profile and payload is already present.
    pub fn put(&mut self, profile: Profile, data: Vec<u8>) -> bool {
        let fresh = self.keys.insert((profile.canonical(), data.clone()));
        if fresh {
            self.entries.push((profile, data));
        }
        fresh
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Simple queries select term-identical profiles; anything else selects
    /// by satisfaction. Sorted by (profile text, data).
    pub fn query(&self, q: &Profile) -> Vec<(String, Vec<u8>)> {
        let mut out: Vec<(String, Vec<u8>)> = self
            .entries
            .iter()
            .filter(|(p, _)| {
                if q.is_simple() {
                    p.canonical() == q.canonical()
                } else {
                    satisfies(p, q)
                }
            })
            .map(|(p, d)| (p.canonical(), d.clone()))
            .collect();
        out.sort();
        out
    }

    pub fn delete_matching(&mut self, q: &Profile) -> usize {
        let before = self.entries.len();
        let keys = &mut self.keys;
        self.entries.retain(|(p, d)| {
            let gone = satisfies(p, q);
            if gone {
                keys.remove(&(p.canonical(), d.clone()));
            }
            !gone
        });
        before - self.entries.len()
    }
}
