//! Daemon configuration. Flags win over `RPMESH_` environment variables,
//! which win over the key=value config file.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::Args;
use rpmesh_core::constants::{SpaceConfig, DEFAULT_CAPACITY, DEFAULT_DIMENSIONS, DEFAULT_ORDER, DEFAULT_REPLICAS};
use rpmesh_core::geo::GeoPoint;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("config file {path}: {msg}")]
    File { path: String, msg: String },
    #[error("bad value for {key}: {msg}")]
    Value { key: &'static str, msg: String },
    #[error("missing required setting {0}")]
    Missing(&'static str),
}

#[derive(Debug, Clone, Default, Args)]
pub struct DaemonArgs {
    /// Key=value file with the lowest precedence.
    #[arg(long, env = "RPMESH_CONFIG")]
    pub config: Option<PathBuf>,
    /// Address to listen on, HOST:PORT.
    #[arg(long, env = "RPMESH_LISTEN")]
    pub listen: Option<String>,
    /// Address peers should use, when it differs from --listen.
    #[arg(long, env = "RPMESH_ADVERTISE")]
    pub advertise: Option<String>,
    /// Position of this node, LAT,LON.
    #[arg(long, env = "RPMESH_GEO", allow_hyphen_values = true)]
    pub geo: Option<String>,
    /// Comma-separated HOST:PORT list; none makes this the first node.
    #[arg(long, env = "RPMESH_BOOTSTRAP")]
    pub bootstrap: Option<String>,
    #[arg(long, env = "RPMESH_DATA")]
    pub data: Option<PathBuf>,
    #[arg(long, env = "RPMESH_RULES")]
    pub rules: Option<PathBuf>,
    /// Keyword space dimensions.
    #[arg(long, env = "RPMESH_D")]
    pub d: Option<u32>,
    /// Bits per axis.
    #[arg(long, env = "RPMESH_B")]
    pub b: Option<u32>,
    /// Ring size that triggers a region split.
    #[arg(long, env = "RPMESH_CAPACITY")]
    pub capacity: Option<usize>,
    #[arg(long, env = "RPMESH_REPLICAS")]
    pub replicas: Option<usize>,
    #[arg(long, env = "RPMESH_KEEPALIVE_MS")]
    pub keepalive_ms: Option<u64>,
    /// Comma-separated function digests the executor may run.
    #[arg(long, env = "RPMESH_ALLOW")]
    pub allow: Option<String>,
    /// Executor worker threads.
    #[arg(long, env = "RPMESH_WORKERS")]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeConfig {
    pub listen: String,
    pub advertise: String,
    pub geo: GeoPoint,
    pub bootstrap: Vec<String>,
    pub data: PathBuf,
    pub rules: Option<PathBuf>,
    pub space: SpaceConfig,
    pub capacity: usize,
    pub replicas: usize,
    pub keepalive_ms: u64,
    pub allow: BTreeSet<String>,
    pub workers: usize,
}

const KEYS: &[&str] = &[
    "listen", "advertise", "geo", "bootstrap", "data", "rules", "d", "b", "capacity", "replicas", "keepalive_ms",
    "allow", "workers",
];

/// Reads `key = value` lines; `#` starts a comment.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", i + 1))?;
        let k = k.trim().replace('-', "_");
        if !KEYS.contains(&k.as_str()) {
            return Err(format!("line {}: unknown key {k:?}", i + 1));
        }
        out.insert(k, v.trim().to_string());
    }
    Ok(out)
}

fn list(s: &str) -> Vec<String> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).map(str::to_string).collect()
}

fn num<T: std::str::FromStr>(key: &'static str, v: &str) -> Result<T, ConfigError> {
    v.parse().map_err(|_| ConfigError::Value {
        key,
        msg: format!("{v:?} is not a number"),
    })
}

impl DaemonArgs {
    pub fn resolve(&self) -> Result<NodeConfig, ConfigError> {
        let file = match &self.config {
            Some(p) => read_file(p)?,
            None => BTreeMap::new(),
        };
        let pick = |flag: Option<String>, key: &str| flag.or_else(|| file.get(key).cloned());
        let listen = pick(self.listen.clone(), "listen").ok_or(ConfigError::Missing("listen"))?;
        let advertise = pick(self.advertise.clone(), "advertise").unwrap_or_else(|| listen.clone());
        let geo = match pick(self.geo.clone(), "geo") {
            Some(g) => GeoPoint::parse(&g).map_err(|msg| ConfigError::Value { key: "geo", msg })?,
            None => return Err(ConfigError::Missing("geo")),
        };
        let bootstrap = pick(self.bootstrap.clone(), "bootstrap").map(|s| list(&s)).unwrap_or_default();
        let data = self
            .data
            .clone()
            .or_else(|| file.get("data").map(PathBuf::from))
            .ok_or(ConfigError::Missing("data"))?;
        let rules = self.rules.clone().or_else(|| file.get("rules").map(PathBuf::from));
        let d = match (self.d, file.get("d")) {
            (Some(d), _) => d,
            (None, Some(v)) => num("d", v)?,
            (None, None) => DEFAULT_DIMENSIONS,
        };
        let b = match (self.b, file.get("b")) {
            (Some(b), _) => b,
            (None, Some(v)) => num("b", v)?,
            (None, None) => DEFAULT_ORDER,
        };
        if d == 0 || b == 0 || d * b > 128 {
            return Err(ConfigError::Value {
                key: "d",
                msg: format!("d={d} b={b} needs 1 <= d*b <= 128"),
            });
        }
        let capacity = match (self.capacity, file.get("capacity")) {
            (Some(c), _) => c,
            (None, Some(v)) => num("capacity", v)?,
            (None, None) => DEFAULT_CAPACITY,
        };
        let replicas = match (self.replicas, file.get("replicas")) {
            (Some(r), _) => r,
            (None, Some(v)) => num("replicas", v)?,
            (None, None) => DEFAULT_REPLICAS,
        };
        if replicas == 0 {
            return Err(ConfigError::Value {
                key: "replicas",
                msg: "must be at least 1".into(),
            });
        }
        let keepalive_ms = match (self.keepalive_ms, file.get("keepalive_ms")) {
            (Some(k), _) => k,
            (None, Some(v)) => num("keepalive_ms", v)?,
            (None, None) => 2000,
        };
        let workers = match (self.workers, file.get("workers")) {
            (Some(w), _) => w,
            (None, Some(v)) => num("workers", v)?,
            (None, None) => 2,
        }
        .max(1);
        let allow = pick(self.allow.clone(), "allow")
            .map(|s| list(&s).into_iter().map(|d| d.to_ascii_lowercase()).collect())
            .unwrap_or_default();
        Ok(NodeConfig {
            listen,
            advertise,
            geo,
            bootstrap,
            data,
            rules,
            space: SpaceConfig { dimensions: d, order: b },
            capacity,
            replicas,
            keepalive_ms,
            allow,
            workers,
        })
    }
}

fn read_file(path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
    let err = |msg: String| ConfigError::File {
        path: path.display().to_string(),
        msg,
    };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    parse_config_file(&text).map_err(err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> DaemonArgs {
        DaemonArgs {
            listen: Some("127.0.0.1:7400".into()),
            geo: Some("40.0583,-74.4056".into()),
            data: Some("/tmp/x".into()),
            ..DaemonArgs::default()
        }
    }

    #[test]
    fn defaults_fill_in() {
        let c = base().resolve().unwrap();
        assert_eq!(c.advertise, "127.0.0.1:7400");
        assert!(c.bootstrap.is_empty());
        assert_eq!(c.space, SpaceConfig::default());
        assert!(c.allow.is_empty());
    }

    #[test]
    fn flags_beat_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("node.conf");
        std::fs::write(&path, "# test\nd = 2\nb=6\nreplicas=2\nbootstrap = a:1, b:2\nlisten=0.0.0.0:1\n").unwrap();
        let mut a = base();
        a.config = Some(path);
        a.replicas = Some(3);
        let c = a.resolve().unwrap();
        assert_eq!(c.space, SpaceConfig { dimensions: 2, order: 6 });
        assert_eq!(c.replicas, 3);
        assert_eq!(c.bootstrap, vec!["a:1", "b:2"]);
        assert_eq!(c.listen, "127.0.0.1:7400");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_config_file("nope").is_err());
        assert!(parse_config_file("colour=red").is_err());
        let mut a = base();
        a.geo = Some("95,0".into());
        assert!(matches!(a.resolve(), Err(ConfigError::Value { key: "geo", .. })));
        let mut a = base();
        a.listen = None;
        assert_eq!(a.resolve(), Err(ConfigError::Missing("listen")));
    }
}
