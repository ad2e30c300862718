//! Line-oriented scenario scripts.
//!
//! ```text
//! at 0 join n0 40.05 -74.40
//! at 500 post n0 store sensor,temp 21.5
//! at 550 query n0 sensor,*
//! at 600 kill n0
//! at 700 partition n1,n2|n3
//! at 800 heal
//! at 900 checkpoint
//! ```

use std::collections::BTreeSet;

use rpmesh_core::ar::{ARMessage, Action, Profile};
use rpmesh_core::geo::GeoPoint;

use crate::sim::{Checkpoint, Sim, SimConfig};
use crate::trace::SimTrace;
use crate::ScenarioError;

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Join { node: String, geo: Option<GeoPoint> },
    Post { node: String, action: Action, profile: Profile, data: Vec<u8> },
    Query { node: String, profile: Profile },
    Kill { node: String },
    Partition(Vec<BTreeSet<String>>),
    Heal,
    Checkpoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub at: u64,
    pub command: Command,
}

/// Splits on whitespace, keeping double-quoted runs together.
fn tokens(line: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut any = false;
    for c in line.chars() {
        match c {
            '"' => {
                quoted = !quoted;
                any = true;
            }
            c if c.is_whitespace() && !quoted => {
                if any {
                    out.push(std::mem::take(&mut cur));
                    any = false;
                }
            }
            c => {
                cur.push(c);
                any = true;
            }
        }
    }
    if quoted {
        return Err("unterminated quote".into());
    }
    if any {
        out.push(cur);
    }
    Ok(out)
}

pub fn parse_script(text: &str) -> Result<Vec<Step>, ScenarioError> {
    let mut steps = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| ScenarioError::Parse { line: i + 1, msg };
        let t = tokens(line).map_err(err)?;
        if t.len() < 3 || t[0] != "at" {
            return Err(err("expected `at <t> <command> ...`".into()));
        }
        let at: u64 = t[1].parse().map_err(|_| err(format!("bad time {:?}", t[1])))?;
        let args = &t[3..];
        let need = |n: usize| {
            if args.len() < n {
                Err(err(format!("{} needs {n} argument(s)", t[2])))
            } else {
                Ok(())
            }
        };
        let profile = |s: &str| Profile::parse(s).map_err(|e| err(format!("bad profile {s:?}: {e}")));
        let command = match t[2].as_str() {
            "join" => {
                need(1)?;
                let geo = match args.len() {
                    1 => None,
                    3 => {
                        let lat: f64 = args[1].parse().map_err(|_| err("bad latitude".into()))?;
                        let lon: f64 = args[2].parse().map_err(|_| err("bad longitude".into()))?;
                        Some(GeoPoint::new(lat, lon).map_err(err)?)
                    }
                    _ => return Err(err("join takes <node> [<lat> <lon>]".into())),
                };
                Command::Join {
                    node: args[0].clone(),
                    geo,
                }
            }
            "post" => {
                need(3)?;
                Command::Post {
                    node: args[0].clone(),
                    action: args[1].parse().map_err(err)?,
                    profile: profile(&args[2])?,
                    data: args.get(3).map(|d| d.as_bytes().to_vec()).unwrap_or_default(),
                }
            }
            "query" => {
                need(2)?;
                Command::Query {
                    node: args[0].clone(),
                    profile: profile(&args[1])?,
                }
            }
            "kill" => {
                need(1)?;
                Command::Kill { node: args[0].clone() }
            }
            "partition" => {
                need(1)?;
                Command::Partition(
                    args[0]
                        .split('|')
                        .map(|g| g.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect())
                        .collect(),
                )
            }
            "heal" => Command::Heal,
            "checkpoint" => Command::Checkpoint,
            other => return Err(err(format!("unknown command {other:?}"))),
        };
        steps.push(Step { at, command });
    }
    let mut last = 0;
    for s in &steps {
        if s.at < last {
            return Err(ScenarioError::Parse {
                line: 0,
                msg: format!("step at {} comes after a step at {last}", s.at),
            });
        }
        last = s.at;
    }
    Ok(steps)
}

pub struct ScenarioOutcome {
    pub sim: Sim,
    pub checkpoints: Vec<Checkpoint>,
}

impl ScenarioOutcome {
    pub fn trace(&self) -> &SimTrace {
        self.sim.trace()
    }
}

/// Runs `steps` in order and then drains outstanding operations.
pub fn run_scenario(config: SimConfig, steps: &[Step]) -> Result<ScenarioOutcome, ScenarioError> {
    let origin = config.origin;
    let drain = config.rp.op_timeout_ms * 3;
    let mut sim = Sim::new(config);
    let mut checkpoints = Vec::new();
    for s in steps {
        sim.run_until(s.at);
        match &s.command {
            Command::Join { node, geo } => sim.join(node, geo.unwrap_or(origin))?,
            Command::Post {
                node,
                action,
                profile,
                data,
            } => {
                sim.post(node, ARMessage::new(profile.clone(), *action).with_data(data.clone()))?;
            }
            Command::Query { node, profile } => {
                sim.query(node, profile.clone(), None)?;
            }
            Command::Kill { node } => sim.kill(node)?,
            Command::Partition(groups) => sim.partition(groups.clone()),
            Command::Heal => sim.heal(),
            Command::Checkpoint => checkpoints.push(sim.checkpoint()),
        }
    }
    sim.run_for(drain);
    Ok(ScenarioOutcome { sim, checkpoints })
}

pub fn run_script(config: SimConfig, text: &str) -> Result<ScenarioOutcome, ScenarioError> {
    run_scenario(config, &parse_script(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_command() {
        let s = parse_script(
            "# comment\nat 0 join n0 40.0 -74.0\nat 5 join n1\nat 10 post n0 store \"a,b\" hello\n\
             at 11 query n1 a,*\nat 20 kill n1\nat 21 partition n0|n1,n2\nat 30 heal\nat 40 checkpoint\n",
        )
        .unwrap();
        assert_eq!(s.len(), 8);
        assert!(matches!(&s[1].command, Command::Join { geo: None, .. }));
        match &s[2].command {
            Command::Post { action, profile, data, .. } => {
                assert_eq!(*action, Action::Store);
                assert_eq!(profile.to_string(), "a,b");
                assert_eq!(data, b"hello");
            }
            c => panic!("{c:?}"),
        }
        match &s[5].command {
            Command::Partition(g) => assert_eq!(g.len(), 2),
            c => panic!("{c:?}"),
        }
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(parse_script("at x join n0"), Err(ScenarioError::Parse { line: 1, .. })));
        assert!(parse_script("at 0 fly n0").is_err());
        assert!(parse_script("at 5 heal\nat 1 heal").is_err());
        assert!(parse_script("at 0 post n0 store").is_err());
    }
}
