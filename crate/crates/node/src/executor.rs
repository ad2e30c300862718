//! Runs started functions on a bounded worker pool. Only functions whose
//! blob digest is on the allow-list run; every decision is appended to the
//! executor log.

use std::collections::{BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Sender};
use std::sync::{Arc, Mutex};
use std::thread;

use rpmesh_core::ar::{FunctionRef, Profile};

/// Reported back to the event loop when a function ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Exit {
    pub instance: u64,
    pub ok: bool,
}

struct Job {
    instance: u64,
    function: FunctionRef,
    profile: Profile,
    input: Vec<u8>,
}

pub struct Executor {
    allow: BTreeSet<String>,
    log: Arc<Mutex<File>>,
    jobs: Sender<Job>,
    exits: Sender<Exit>,
    children: Arc<Mutex<HashMap<u64, Child>>>,
}

fn log_line(log: &Mutex<File>, line: &str) {
    let mut f = log.lock().expect("executor log lock");
    let _ = writeln!(f, "{line}");
    let _ = f.flush();
}

impl Executor {
    pub fn new(log_path: &Path, allow: BTreeSet<String>, workers: usize, exits: Sender<Exit>) -> io::Result<Self> {
        let log = Arc::new(Mutex::new(OpenOptions::new().create(true).append(true).open(log_path)?));
        let children: Arc<Mutex<HashMap<u64, Child>>> = Arc::default();
        let (jobs, rx) = mpsc::channel::<Job>();
        let rx = Arc::new(Mutex::new(rx));
        for i in 0..workers.max(1) {
            let rx = Arc::clone(&rx);
            let log = Arc::clone(&log);
            let children = Arc::clone(&children);
            let exits = exits.clone();
            thread::Builder::new().name(format!("exec {i}")).spawn(move || loop {
                let job = match rx.lock().expect("job queue lock").recv() {
                    Ok(j) => j,
                    Err(_) => return,
                };
                let ok = run(&job, &log, &children);
                let _ = exits.send(Exit {
                    instance: job.instance,
                    ok,
                });
            })?;
        }
        Ok(Executor {
            allow,
            log,
            jobs,
            exits,
            children,
        })
    }

    pub fn start(&self, instance: u64, function: FunctionRef, profile: Profile, input: Vec<u8>) {
        let digest = function.digest_hex();
        if !self.allow.contains(&digest) {
            log_line(
                &self.log,
                &format!("deny instance={instance} name={} digest={digest} profile={profile}", function.name),
            );
            let _ = self.exits.send(Exit { instance, ok: false });
            return;
        }
        let job = Job {
            instance,
            function,
            profile,
            input,
        };
        if self.jobs.send(job).is_err() {
            let _ = self.exits.send(Exit { instance, ok: false });
        }
    }

    pub fn stop(&self, instance: u64) {
        if let Some(c) = self.children.lock().expect("children lock").get_mut(&instance) {
            let _ = c.kill();
        }
    }
}

fn run(job: &Job, log: &Mutex<File>, children: &Mutex<HashMap<u64, Child>>) -> bool {
    let f = &job.function;
    log_line(
        log,
        &format!(
            "run instance={} name={} digest={} runtime={} profile={} input_bytes={}",
            job.instance,
            f.name,
            f.digest_hex(),
            f.runtime_tag,
            job.profile,
            job.input.len()
        ),
    );
    match f.runtime_tag.as_str() {
        // recorded only; nothing to execute in-process beyond the log entry
        "inproc" => true,
        "exec" => {
            let cmd = String::from_utf8_lossy(&f.blob).into_owned();
            let spawned = Command::new("sh")
                .arg("-c")
                .arg(&cmd)
                .env("RPMESH_PROFILE", job.profile.to_string())
                .env("RPMESH_INSTANCE", job.instance.to_string())
                .stdin(Stdio::piped())
                .stdout(Stdio::null())
                .spawn();
            let mut child = match spawned {
                Ok(c) => c,
                Err(e) => {
                    log_line(log, &format!("exit instance={} error={e}", job.instance));
                    return false;
                }
            };
            if let Some(mut stdin) = child.stdin.take() {
                let _ = stdin.write_all(&job.input);
            }
            children.lock().expect("children lock").insert(job.instance, child);
            let status = loop {
                let mut map = children.lock().expect("children lock");
                let Some(c) = map.get_mut(&job.instance) else { break None };
                match c.try_wait() {
                    Ok(Some(s)) => {
                        map.remove(&job.instance);
                        break Some(s);
                    }
                    Ok(None) => {}
                    Err(_) => {
                        map.remove(&job.instance);
                        break None;
                    }
                }
                drop(map);
                thread::sleep(std::time::Duration::from_millis(5));
            };
            let ok = status.is_some_and(|s| s.success());
            let code = status.and_then(|s| s.code()).map_or("signal".to_string(), |c| c.to_string());
            log_line(log, &format!("exit instance={} status={code}", job.instance));
            ok
        }
        other => {
            log_line(log, &format!("exit instance={} error=unknown runtime {other}", job.instance));
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deny_by_default_and_run_allowed() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("executor.log");
        let f = FunctionRef::new("analyze", b"true".to_vec(), "exec");
        let (tx, rx) = mpsc::channel();
        let denied = Executor::new(&log, BTreeSet::new(), 1, tx.clone()).unwrap();
        denied.start(1, f.clone(), Profile::parse("analyze").unwrap(), vec![]);
        assert_eq!(rx.recv().unwrap(), Exit { instance: 1, ok: false });
        let allowed = Executor::new(&log, [f.digest_hex()].into(), 1, tx).unwrap();
        allowed.start(2, f, Profile::parse("analyze").unwrap(), b"{}".to_vec());
        assert_eq!(rx.recv().unwrap(), Exit { instance: 2, ok: true });
        let text = std::fs::read_to_string(&log).unwrap();
        let kinds: Vec<&str> = text.lines().map(|l| l.split(' ').next().unwrap()).collect();
        assert_eq!(kinds, ["deny", "run", "exit"]);
    }
}
