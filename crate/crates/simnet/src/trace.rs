//! Event trace and summary statistics.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::io;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub time: u64,
    pub event: &'static str,
    pub src: u32,
    pub dst: u32,
    pub frame: Cow<'static, str>,
    pub hops: u32,
}

/// Ordered events of one run. Node names are interned so large runs stay
/// small in memory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimTrace {
    names: Vec<String>,
    index: BTreeMap<String, u32>,
    pub events: Vec<TraceEvent>,
}

/// Index used for columns that name no node.
pub const NOBODY: u32 = u32::MAX;

impl SimTrace {
    pub fn intern(&mut self, name: &str) -> u32 {
        if let Some(i) = self.index.get(name) {
            return *i;
        }
        let i = self.names.len() as u32;
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), i);
        i
    }

    pub fn name(&self, i: u32) -> &str {
        if i == NOBODY {
            ""
        } else {
            &self.names[i as usize]
        }
    }

    pub fn push(&mut self, time: u64, event: &'static str, src: &str, dst: &str, frame: impl Into<Cow<'static, str>>, hops: u32) {
        let src = if src.is_empty() { NOBODY } else { self.intern(src) };
        let dst = if dst.is_empty() { NOBODY } else { self.intern(dst) };
        self.events.push(TraceEvent {
            time,
            event,
            src,
            dst,
            frame: frame.into(),
            hops,
        });
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn of_kind<'a>(&'a self, event: &'a str) -> impl Iterator<Item = &'a TraceEvent> + 'a {
        self.events.iter().filter(move |e| e.event == event)
    }

    /// Writes `time,event,src,dst,frame,hops`.
    pub fn write_csv<W: io::Write>(&self, out: W) -> io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "event", "src", "dst", "frame", "hops"])?;
        for e in &self.events {
            w.write_record([
                e.time.to_string().as_str(),
                e.event,
                self.name(e.src),
                self.name(e.dst),
                &e.frame,
                e.hops.to_string().as_str(),
            ])?;
        }
        w.flush()
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8 csv")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    /// Master plus lookup hops of each completed operation.
    Hops,
    /// Virtual ms from origination to completion.
    Latency,
    /// Number of rendezvous points that executed each operation.
    DeliveredSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub p50: f64,
    pub p95: f64,
    /// Value per operation id.
    pub per_op: BTreeMap<String, f64>,
}

impl Summary {
    pub fn from_values(per_op: BTreeMap<String, f64>) -> Summary {
        let mut v: Vec<f64> = per_op.values().copied().collect();
        v.sort_by(f64::total_cmp);
        let count = v.len();
        let pick = |q: f64| -> f64 {
            if v.is_empty() {
                0.0
            } else {
                v[((count - 1) as f64 * q).round() as usize]
            }
        };
        Summary {
            count,
            mean: if count == 0 { 0.0 } else { v.iter().sum::<f64>() / count as f64 },
            min: v.first().copied().unwrap_or(0.0),
            max: v.last().copied().unwrap_or(0.0),
            p50: pick(0.5),
            p95: pick(0.95),
            per_op,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["op", "value"]).expect("in-memory write");
        for (op, v) in &self.per_op {
            w.write_record([op.as_str(), v.to_string().as_str()]).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8 csv")
    }
}

/// Summarizes operations recorded in `trace`. Operations that never
/// completed count for the delivered set only.
pub fn measure(trace: &SimTrace, metric: Metric) -> Summary {
    let mut started: BTreeMap<&str, u64> = BTreeMap::new();
    let mut values: BTreeMap<String, f64> = BTreeMap::new();
    for e in &trace.events {
        match (e.event, metric) {
            ("post" | "query", Metric::Latency) => {
                started.insert(&e.frame, e.time);
            }
            ("post" | "query", Metric::DeliveredSet) => {
                values.entry(e.frame.to_string()).or_insert(0.0);
            }
            ("completed", Metric::Hops) => {
                values.insert(e.frame.to_string(), e.hops as f64);
            }
            ("completed", Metric::Latency) => {
                if let Some(t) = started.get(e.frame.as_ref()) {
                    values.insert(e.frame.to_string(), (e.time - t) as f64);
                }
            }
            ("executed", Metric::DeliveredSet) => {
                *values.entry(e.frame.to_string()).or_insert(0.0) += 1.0;
            }
            _ => {}
        }
    }
    Summary::from_values(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_quotes() {
        let mut t = SimTrace::default();
        t.push(3, "send", "n0", "n1", "PING", 0);
        t.push(4, "state", "n1", "", "joined region=,", 0);
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "time,event,src,dst,frame,hops");
        assert_eq!(lines[1], "3,send,n0,n1,PING,0");
        assert_eq!(lines[2], "4,state,n1,,\"joined region=,\",0");
    }

    #[test]
    fn summary_statistics() {
        let mut t = SimTrace::default();
        t.push(0, "post", "a", "", "op1", 0);
        t.push(0, "post", "a", "", "op2", 0);
        t.push(10, "executed", "b", "", "op1", 0);
        t.push(10, "executed", "c", "", "op1", 0);
        t.push(12, "completed", "a", "", "op1", 3);
        t.push(30, "completed", "a", "", "op2", 1);
        let lat = measure(&t, Metric::Latency);
        assert_eq!(lat.count, 2);
        assert_eq!(lat.mean, 21.0);
        assert_eq!(lat.max, 30.0);
        let hops = measure(&t, Metric::Hops);
        assert_eq!(hops.mean, 2.0);
        let set = measure(&t, Metric::DeliveredSet);
        assert_eq!(set.per_op["op1"], 2.0);
        assert_eq!(set.per_op["op2"], 0.0);
    }
}
