//! Replicated profile store: a bounded in-memory recency tier over an
//! append-only cold log, with exact and wildcard queries.

mod log;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use lru::LruCache;
use thiserror::Error;

pub use log::{ColdLog, LogReader};

use crate::ar::{self, content_digest, matches, Profile, Term};
use crate::constants::SpaceConfig;
use crate::id::NodeId;
use crate::sfc::{encode_keyword, routing_target, AxisInterval, SfcIndex};
use crate::wire::codec::{decode_profile, encode_profile};
use crate::wire::{Fields, TlvWriter};

pub type Digest = [u8; 32];

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store failed: {0}")]
    StoreFailed(#[from] io::Error),
    #[error("corrupt store record: {0}")]
    Corrupt(String),
    #[error("profile cannot be placed: {0}")]
    BadProfile(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredEntry {
    pub profile: Profile,
    pub sfc_index: SfcIndex,
    pub data: Vec<u8>,
    pub digest: Digest,
    pub stored_at: u64,
    pub origin: NodeId,
}

impl StoredEntry {
    pub fn new(
        profile: Profile,
        data: Vec<u8>,
        origin: NodeId,
        stored_at: u64,
        space: SpaceConfig,
    ) -> Result<Self, StoreError> {
        let sfc_index = routing_target(&profile, space)
            .map_err(|e| StoreError::BadProfile(e.to_string()))?
            .anchor();
        Ok(StoredEntry {
            digest: content_digest(&profile, &data),
            profile,
            sfc_index,
            data,
            stored_at,
            origin,
        })
    }

    pub fn digest_hex(&self) -> String {
        ar::hex(&self.digest)
    }
}

mod tag {
    pub const KIND: u8 = 1;
    pub const PROFILE: u8 = 2;
    pub const DATA: u8 = 3;
    pub const DIGEST: u8 = 4;
    pub const STORED_AT: u8 = 5;
    pub const ORIGIN: u8 = 6;
    pub const SFC: u8 = 7;
}

const PUT: u8 = 1;
const TOMBSTONE: u8 = 2;
const TOUCH: u8 = 3;

fn put_record(e: &StoredEntry) -> Vec<u8> {
    let mut w = TlvWriter::new();
    w.u8(tag::KIND, PUT)
        .nested(tag::PROFILE, &encode_profile(&e.profile))
        .bytes(tag::DATA, &e.data)
        .bytes(tag::DIGEST, &e.digest)
        .u64(tag::STORED_AT, e.stored_at)
        .id(tag::ORIGIN, &e.origin)
        .bytes(tag::SFC, &e.sfc_index.0.to_be_bytes());
    w.finish()
}

fn small_record(kind: u8, digest: &Digest, at: u64) -> Vec<u8> {
    let mut w = TlvWriter::new();
    w.u8(tag::KIND, kind)
        .bytes(tag::DIGEST, digest)
        .u64(tag::STORED_AT, at);
    w.finish()
}

enum Record {
    Put(StoredEntry),
    Tombstone(Digest),
    Touch(Digest, u64),
}

fn corrupt(e: impl std::fmt::Display) -> StoreError {
    StoreError::Corrupt(e.to_string())
}

fn decode_record(buf: &[u8]) -> Result<Record, StoreError> {
    let f = Fields::parse(buf).map_err(corrupt)?;
    let digest: Digest = f
        .req(tag::DIGEST)
        .map_err(corrupt)?
        .try_into()
        .map_err(|_| corrupt("digest length"))?;
    match f.u8(tag::KIND).map_err(corrupt)? {
        PUT => {
            let sfc: [u8; 16] = f
                .req(tag::SFC)
                .map_err(corrupt)?
                .try_into()
                .map_err(|_| corrupt("index length"))?;
            Ok(Record::Put(StoredEntry {
                profile: decode_profile(f.req(tag::PROFILE).map_err(corrupt)?).map_err(corrupt)?,
                sfc_index: SfcIndex(u128::from_be_bytes(sfc)),
                data: f.req(tag::DATA).map_err(corrupt)?.to_vec(),
                digest,
                stored_at: f.u64(tag::STORED_AT).map_err(corrupt)?,
                origin: f.id(tag::ORIGIN).map_err(corrupt)?,
            }))
        }
        TOMBSTONE => Ok(Record::Tombstone(digest)),
        TOUCH => Ok(Record::Touch(digest, f.u64(tag::STORED_AT).map_err(corrupt)?)),
        k => Err(corrupt(format!("record kind {k}"))),
    }
}

#[derive(Debug, Clone)]
struct Meta {
    profile: Profile,
    sfc_index: SfcIndex,
    stored_at: u64,
    origin: NodeId,
    pos: u64,
    data_len: usize,
    /// Axis coordinates of an all-exact profile of at most d terms.
    coords: Option<Vec<u64>>,
}

/// Catalogue of live entries plus the narrowing indexes.
#[derive(Debug, Clone, Default)]
struct Index {
    entries: BTreeMap<Digest, Meta>,
    by_sfc: BTreeMap<u128, BTreeSet<Digest>>,
    axes: Vec<BTreeMap<u64, BTreeSet<Digest>>>,
    unindexed: BTreeSet<Digest>,
}

fn coords_of(profile: &Profile, space: SpaceConfig) -> Option<Vec<u64>> {
    if profile.len() > space.dimensions as usize || !profile.is_simple() {
        return None;
    }
    profile
        .terms()
        .iter()
        .map(|t| encode_keyword(&t.routing_text(), space.order).ok().map(|i| i.lo))
        .collect()
}

/// Axis interval holding the coordinate of every exact stored term that
/// could satisfy `t`: all such terms start with the attribute text.
fn widened(t: &Term, order: u32) -> Option<AxisInterval> {
    let prefix = match t {
        Term::Any => return None,
        Term::AttrPrefix(p) => p.as_str(),
        other => other.attribute(),
    };
    encode_keyword(&format!("{prefix}*"), order).ok()
}

impl Index {
    fn new(dims: usize) -> Self {
        Index {
            axes: vec![BTreeMap::new(); dims],
            ..Index::default()
        }
    }

    fn insert(&mut self, digest: Digest, meta: Meta) {
        self.remove(&digest);
        match &meta.coords {
            Some(c) => {
                self.by_sfc.entry(meta.sfc_index.0).or_default().insert(digest);
                for (axis, v) in c.iter().enumerate() {
                    self.axes[axis].entry(*v).or_default().insert(digest);
                }
            }
            None => {
                self.unindexed.insert(digest);
            }
        }
        self.entries.insert(digest, meta);
    }

    fn remove(&mut self, digest: &Digest) -> Option<Meta> {
        let meta = self.entries.remove(digest)?;
        match &meta.coords {
            Some(c) => {
                if let Some(s) = self.by_sfc.get_mut(&meta.sfc_index.0) {
                    s.remove(digest);
                    if s.is_empty() {
                        self.by_sfc.remove(&meta.sfc_index.0);
                    }
                }
                for (axis, v) in c.iter().enumerate() {
                    if let Some(s) = self.axes[axis].get_mut(v) {
                        s.remove(digest);
                        if s.is_empty() {
                            self.axes[axis].remove(v);
                        }
                    }
                }
            }
            None => {
                self.unindexed.remove(digest);
            }
        }
        Some(meta)
    }

    /// Digests that may match `query`, or `None` when a full scan is needed.
    fn candidates(&self, query: &Profile, space: SpaceConfig) -> Option<BTreeSet<Digest>> {
        if query.len() > space.dimensions as usize {
            return None;
        }
        let mut acc: Option<BTreeSet<Digest>> = None;
        for t in query.terms() {
            let Some(w) = widened(t, space.order) else {
                continue;
            };
            let mut hit = BTreeSet::new();
            for axis in &self.axes {
                for (_, ds) in axis.range(w.lo..=w.hi) {
                    hit.extend(ds.iter().copied());
                }
            }
            acc = Some(match acc {
                None => hit,
                Some(prev) => prev.intersection(&hit).copied().collect(),
            });
        }
        let mut out = acc?;
        out.extend(self.unindexed.iter().copied());
        Some(out)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StoreStats {
    pub entries: u64,
    pub hot_entries: u64,
    pub hot_bytes: u64,
    pub hot_capacity: u64,
    pub puts: u64,
    pub duplicates: u64,
    pub evictions: u64,
    pub scans: u64,
    pub narrowed: u64,
    pub deleted: u64,
    pub compactions: u64,
    pub log_bytes: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct StoreConfig {
    pub space: SpaceConfig,
    pub hot_capacity: u64,
    /// Log size below which compaction never runs.
    pub compaction_floor: u64,
}

impl StoreConfig {
    pub fn new(space: SpaceConfig) -> Self {
        StoreConfig {
            space,
            hot_capacity: 64 << 20,
            compaction_floor: 1 << 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PutOutcome {
    Inserted,
    Duplicate,
}

pub struct Store {
    cfg: StoreConfig,
    log: ColdLog,
    dir: Option<PathBuf>,
    index: Arc<Index>,
    hot: LruCache<Digest, Arc<Vec<u8>>>,
    hot_bytes: u64,
    compacted_len: u64,
    stats: StoreStats,
}

/// Read-only view of a store at one instant.
#[derive(Clone)]
pub struct StoreSnapshot {
    space: SpaceConfig,
    index: Arc<Index>,
    reader: LogReader,
}

const LOG_FILE: &str = "data.log";
const INDEX_FILE: &str = "index.tsv";

fn read_entry(reader: &LogReader, digest: &Digest, meta: &Meta) -> Result<StoredEntry, StoreError> {
    match decode_record(&reader.read(meta.pos)?)? {
        Record::Put(mut e) if e.digest == *digest => {
            e.stored_at = meta.stored_at;
            Ok(e)
        }
        _ => Err(corrupt("index points at a foreign record")),
    }
}

fn query_index(
    index: &Index,
    space: SpaceConfig,
    query: &Profile,
    exact: bool,
    stats: &mut StoreStats,
) -> Vec<Digest> {
    if exact {
        if let (true, Ok(t)) = (
            query.is_simple() && query.len() <= space.dimensions as usize,
            routing_target(query, space),
        ) {
            stats.narrowed += 1;
            let mut out = Vec::new();
            if let Some(ds) = index.by_sfc.get(&t.anchor().0) {
                out.extend(ds.iter().filter(|d| index.entries[*d].profile.same_terms(query)));
            }
            return out;
        }
        stats.scans += 1;
        return index
            .entries
            .iter()
            .filter(|(_, m)| m.profile.same_terms(query))
            .map(|(d, _)| *d)
            .collect();
    }
    match index.candidates(query, space) {
        Some(c) => {
            stats.narrowed += 1;
            c.into_iter()
                .filter(|d| matches(&index.entries[d].profile, query))
                .collect()
        }
        None => {
            stats.scans += 1;
            index
                .entries
                .iter()
                .filter(|(_, m)| matches(&m.profile, query))
                .map(|(d, _)| *d)
                .collect()
        }
    }
}

impl StoreSnapshot {
    pub fn len(&self) -> usize {
        self.index.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.entries.is_empty()
    }

    pub fn query(&self, query: &Profile) -> Result<Vec<StoredEntry>, StoreError> {
        let mut scratch = StoreStats::default();
        let exact = query.is_simple();
        query_index(&self.index, self.space, query, exact, &mut scratch)
            .iter()
            .map(|d| read_entry(&self.reader, d, &self.index.entries[d]))
            .collect()
    }
}

impl Store {
    pub fn in_memory(cfg: StoreConfig) -> Self {
        Store::with_log(cfg, ColdLog::in_memory(), None)
    }

    fn with_log(cfg: StoreConfig, log: ColdLog, dir: Option<PathBuf>) -> Self {
        let len = log.len();
        Store {
            cfg,
            log,
            dir,
            index: Arc::new(Index::new(cfg.space.dimensions as usize)),
            hot: LruCache::unbounded(),
            hot_bytes: 0,
            compacted_len: len,
            stats: StoreStats {
                hot_capacity: cfg.hot_capacity,
                ..StoreStats::default()
            },
        }
    }

    /// Opens a store directory, replaying the cold log.
    pub fn open(dir: &Path, cfg: StoreConfig) -> Result<Self, StoreError> {
        fs::create_dir_all(dir)?;
        let (log, records) = ColdLog::open(&dir.join(LOG_FILE))?;
        let mut store = Store::with_log(cfg, log, Some(dir.to_path_buf()));
        for (pos, payload) in records {
            match decode_record(&payload)? {
                Record::Put(e) => {
                    let meta = store.meta_for(&e, pos);
                    Arc::make_mut(&mut store.index).insert(e.digest, meta);
                }
                Record::Tombstone(d) => {
                    Arc::make_mut(&mut store.index).remove(&d);
                }
                Record::Touch(d, at) => {
                    if let Some(m) = Arc::make_mut(&mut store.index).entries.get_mut(&d) {
                        m.stored_at = at;
                    }
                }
            }
        }
        if !dir.join(INDEX_FILE).exists() {
            store.write_index_file()?;
        }
        Ok(store)
    }

    fn meta_for(&self, e: &StoredEntry, pos: u64) -> Meta {
        Meta {
            coords: coords_of(&e.profile, self.cfg.space),
            profile: e.profile.clone(),
            sfc_index: e.sfc_index,
            stored_at: e.stored_at,
            origin: e.origin,
            pos,
            data_len: e.data.len(),
        }
    }

    pub fn config(&self) -> StoreConfig {
        self.cfg
    }

    pub fn len(&self) -> usize {
        self.index.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.entries.is_empty()
    }

    pub fn contains(&self, digest: &Digest) -> bool {
        self.index.entries.contains_key(digest)
    }

    pub fn stats(&self) -> StoreStats {
        StoreStats {
            entries: self.index.entries.len() as u64,
            hot_entries: self.hot.len() as u64,
            hot_bytes: self.hot_bytes,
            log_bytes: self.log.len(),
            ..self.stats
        }
    }

    fn cache(&mut self, digest: Digest, data: Arc<Vec<u8>>) {
        let size = data.len() as u64;
        if size > self.cfg.hot_capacity {
            return;
        }
        if let Some(old) = self.hot.put(digest, data) {
            self.hot_bytes -= old.len() as u64;
        }
        self.hot_bytes += size;
        while self.hot_bytes > self.cfg.hot_capacity {
            match self.hot.pop_lru() {
                Some((_, v)) => {
                    self.hot_bytes -= v.len() as u64;
                    self.stats.evictions += 1;
                }
                None => break,
            }
        }
    }

    fn uncache(&mut self, digest: &Digest) {
        if let Some(v) = self.hot.pop(digest) {
            self.hot_bytes -= v.len() as u64;
        }
    }

    pub fn put(&mut self, entry: StoredEntry) -> Result<PutOutcome, StoreError> {
        self.stats.puts += 1;
        if self.index.entries.contains_key(&entry.digest) {
            self.log.append(&small_record(TOUCH, &entry.digest, entry.stored_at))?;
            if let Some(m) = Arc::make_mut(&mut self.index).entries.get_mut(&entry.digest) {
                m.stored_at = entry.stored_at;
            }
            self.stats.duplicates += 1;
            return Ok(PutOutcome::Duplicate);
        }
        let pos = self.log.append(&put_record(&entry))?;
        let meta = self.meta_for(&entry, pos);
        Arc::make_mut(&mut self.index).insert(entry.digest, meta);
        self.cache(entry.digest, Arc::new(entry.data));
        self.maybe_compact()?;
        Ok(PutOutcome::Inserted)
    }

    fn load(&mut self, digest: &Digest) -> Result<Option<StoredEntry>, StoreError> {
        let Some(meta) = self.index.entries.get(digest).cloned() else {
            return Ok(None);
        };
        if let Some(data) = self.hot.get(digest) {
            return Ok(Some(StoredEntry {
                profile: meta.profile,
                sfc_index: meta.sfc_index,
                data: data.as_ref().clone(),
                digest: *digest,
                stored_at: meta.stored_at,
                origin: meta.origin,
            }));
        }
        let e = read_entry(&self.log.reader(), digest, &meta)?;
        self.cache(*digest, Arc::new(e.data.clone()));
        Ok(Some(e))
    }

    pub fn get(&mut self, digest: &Digest) -> Result<Option<StoredEntry>, StoreError> {
        self.load(digest)
    }

    fn collect(&mut self, digests: Vec<Digest>) -> Result<Vec<StoredEntry>, StoreError> {
        let mut out = Vec::with_capacity(digests.len());
        for d in digests {
            if let Some(e) = self.load(&d)? {
                out.push(e);
            }
        }
        Ok(out)
    }

    /// Entries whose profile equals `query` term by term.
    pub fn query_exact(&mut self, query: &Profile) -> Result<Vec<StoredEntry>, StoreError> {
        let ds = query_index(&self.index, self.cfg.space, query, true, &mut self.stats);
        self.collect(ds)
    }

    /// Entries whose profile satisfies `query`.
    pub fn query_wildcard(&mut self, query: &Profile) -> Result<Vec<StoredEntry>, StoreError> {
        let ds = query_index(&self.index, self.cfg.space, query, false, &mut self.stats);
        self.collect(ds)
    }

    /// Exact lookup for all-exact profiles, associative otherwise.
    pub fn query(&mut self, query: &Profile) -> Result<Vec<StoredEntry>, StoreError> {
        if query.is_simple() {
            self.query_exact(query)
        } else {
            self.query_wildcard(query)
        }
    }

    /// Profiles and digests of entries satisfying `query`, without data.
    pub fn matching(&mut self, query: &Profile) -> Vec<(Digest, Profile)> {
        query_index(&self.index, self.cfg.space, query, false, &mut self.stats)
            .into_iter()
            .map(|d| (d, self.index.entries[&d].profile.clone()))
            .collect()
    }

    pub fn delete_matching(&mut self, query: &Profile) -> Result<usize, StoreError> {
        let ds = query_index(&self.index, self.cfg.space, query, false, &mut self.stats);
        for d in &ds {
            self.log.append(&small_record(TOMBSTONE, d, 0))?;
            Arc::make_mut(&mut self.index).remove(d);
            self.uncache(d);
        }
        self.stats.deleted += ds.len() as u64;
        self.maybe_compact()?;
        Ok(ds.len())
    }

    pub fn delete(&mut self, digest: &Digest) -> Result<bool, StoreError> {
        if !self.index.entries.contains_key(digest) {
            return Ok(false);
        }
        self.log.append(&small_record(TOMBSTONE, digest, 0))?;
        Arc::make_mut(&mut self.index).remove(digest);
        self.uncache(digest);
        self.stats.deleted += 1;
        Ok(true)
    }

    /// Every live entry, in digest order.
    pub fn entries(&mut self) -> Result<Vec<StoredEntry>, StoreError> {
        let ds: Vec<Digest> = self.index.entries.keys().copied().collect();
        self.collect(ds)
    }

    pub fn snapshot(&self) -> StoreSnapshot {
        StoreSnapshot {
            space: self.cfg.space,
            index: self.index.clone(),
            reader: self.log.reader(),
        }
    }

    fn maybe_compact(&mut self) -> Result<(), StoreError> {
        let threshold = self.compacted_len.max(self.cfg.compaction_floor) * 2;
        if self.log.len() >= threshold {
            self.compact()?;
        }
        Ok(())
    }

    /// Rewrites the cold log with live entries only.
    pub fn compact(&mut self) -> Result<(), StoreError> {
        let reader = self.log.reader();
        let mut live = Vec::with_capacity(self.index.entries.len());
        let mut payloads = Vec::with_capacity(self.index.entries.len());
        for (d, m) in &self.index.entries {
            let e = read_entry(&reader, d, m)?;
            payloads.push(put_record(&e));
            live.push(*d);
        }
        let positions = self.log.rewrite(&payloads)?;
        let index = Arc::make_mut(&mut self.index);
        for (d, pos) in live.iter().zip(positions) {
            if let Some(m) = index.entries.get_mut(d) {
                m.pos = pos;
            }
        }
        self.compacted_len = self.log.len();
        self.stats.compactions += 1;
        self.write_index_file()?;
        Ok(())
    }

    fn write_index_file(&self) -> Result<(), StoreError> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let mut text = String::new();
        for (d, m) in &self.index.entries {
            text.push_str(&format!("{:x}\t{}\t{}\t{}\n", m.sfc_index.0, m.pos, m.data_len, ar::hex(d)));
        }
        let tmp = dir.join("index.tsv.tmp");
        fs::write(&tmp, text)?;
        fs::rename(tmp, dir.join(INDEX_FILE))?;
        Ok(())
    }

    /// Forces the cold log to disk and refreshes the index file.
    pub fn flush(&mut self) -> Result<(), StoreError> {
        self.log.sync()?;
        self.write_index_file()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space() -> SpaceConfig {
        SpaceConfig::new(3, 16)
    }

    fn entry(p: &str, data: &str) -> StoredEntry {
        StoredEntry::new(Profile::parse(p).unwrap(), data.as_bytes().to_vec(), NodeId::ZERO, 1, space()).unwrap()
    }

    fn q(s: &str) -> Profile {
        Profile::parse(s).unwrap()
    }

    #[test]
    fn put_get_and_duplicates() {
        let mut s = Store::in_memory(StoreConfig::new(space()));
        let e = entry("drone,lidar", "x");
        assert_eq!(s.put(e.clone()).unwrap(), PutOutcome::Inserted);
        assert_eq!(s.put(e.clone()).unwrap(), PutOutcome::Duplicate);
        assert_eq!(s.len(), 1);
        assert_eq!(s.query_exact(&q("drone,lidar")).unwrap(), vec![e]);
        assert!(s.query_exact(&q("drone,radar")).unwrap().is_empty());
    }

    #[test]
    fn wildcard_queries_and_delete() {
        let mut s = Store::in_memory(StoreConfig::new(space()));
        s.put(entry("drone,lidar", "1")).unwrap();
        s.put(entry("drone,radar", "2")).unwrap();
        assert_eq!(s.query_wildcard(&q("drone,*")).unwrap().len(), 2);
        let li = s.query_wildcard(&q("drone,li*")).unwrap();
        assert_eq!(li.len(), 1);
        assert_eq!(li[0].data, b"1");
        assert_eq!(s.delete_matching(&q("nothing")).unwrap(), 0);
        assert_eq!(s.delete_matching(&q("*")).unwrap(), 2);
        assert!(s.is_empty());
    }

    #[test]
    fn hot_tier_stays_bounded() {
        let mut cfg = StoreConfig::new(space());
        cfg.hot_capacity = 100;
        let mut s = Store::in_memory(cfg);
        for i in 0..20 {
            s.put(entry(&format!("k{i}"), "0123456789")).unwrap();
            assert!(s.stats().hot_bytes <= 100);
        }
        assert!(s.stats().evictions >= 10);
        for i in 0..20 {
            assert_eq!(s.query_exact(&q(&format!("k{i}"))).unwrap().len(), 1);
        }
    }

    #[test]
    fn recovery_replays_puts_and_tombstones() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = StoreConfig::new(space());
        {
            let mut s = Store::open(dir.path(), cfg).unwrap();
            s.put(entry("a,b", "1")).unwrap();
            s.put(entry("a,c", "2")).unwrap();
            s.delete_matching(&q("a,c")).unwrap();
        }
        let mut s = Store::open(dir.path(), cfg).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.query(&q("a,*")).unwrap()[0].data, b"1");
        assert!(dir.path().join(INDEX_FILE).exists());
    }

    #[test]
    fn compaction_preserves_live_entries() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = StoreConfig::new(space());
        cfg.compaction_floor = 512;
        let mut s = Store::open(dir.path(), cfg).unwrap();
        for i in 0..50 {
            s.put(entry(&format!("k{i}"), "payload")).unwrap();
            s.delete_matching(&q(&format!("k{i}"))).unwrap();
        }
        s.put(entry("keep", "me")).unwrap();
        assert!(s.stats().compactions > 0);
        drop(s);
        let mut s = Store::open(dir.path(), cfg).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.query(&q("keep")).unwrap()[0].data, b"me");
    }

    #[test]
    fn snapshot_is_isolated() {
        let mut s = Store::in_memory(StoreConfig::new(space()));
        s.put(entry("a", "1")).unwrap();
        let snap = s.snapshot();
        s.put(entry("b", "2")).unwrap();
        s.delete_matching(&q("a")).unwrap();
        assert_eq!(snap.query(&q("*")).unwrap().len(), 1);
        assert_eq!(snap.query(&q("a")).unwrap().len(), 1);
        assert_eq!(s.query(&q("*")).unwrap().len(), 1);
    }
}
