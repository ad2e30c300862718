//! Printing replies. Human output is tabular; machine output is one
//! `kind key=value ...` record per line with values quoted when needed.

use rpmesh_core::rp::{ClientReply, Receipt};

fn quote(v: &str) -> String {
    if !v.is_empty() && v.bytes().all(|b| b.is_ascii_graphic() && b != b'"' && b != b'=') {
        v.to_string()
    } else {
        format!("{v:?}")
    }
}

fn printable(data: &[u8]) -> String {
    match std::str::from_utf8(data) {
        Ok(s) if !s.chars().any(|c| c.is_control() && c != '\n') => s.to_string(),
        _ => data.iter().map(|b| format!("{b:02x}")).collect(),
    }
}

fn record(kind: &str, fields: &[(&str, String)]) -> String {
    let mut s = kind.to_string();
    for (k, v) in fields {
        s.push(' ');
        s.push_str(k);
        s.push('=');
        s.push_str(&quote(v));
    }
    s
}

pub fn receipt_lines(r: &Receipt, machine: bool) -> Vec<String> {
    let action = r.action.map_or("query".to_string(), |a| a.to_string());
    let mut out = Vec::new();
    if machine {
        let mut f = vec![
            ("op", r.op.to_string()),
            ("action", action),
            ("rps", r.rp_count().to_string()),
            ("degraded", r.degraded.to_string()),
            ("master_hops", r.master_hops.to_string()),
            ("lookup_hops", r.lookup_hops.to_string()),
            ("started", r.started().to_string()),
        ];
        if let Some(e) = &r.error {
            f.push(("error", e.clone()));
        }
        out.push(record("receipt", &f));
        for x in &r.results {
            let mut f = vec![
                ("id", x.rp.to_hex()),
                ("endpoint", x.endpoint.clone()),
                ("count", x.count.to_string()),
                ("started", x.started.to_string()),
                ("duplicate", x.duplicate.to_string()),
            ];
            if let Some(s) = &x.stats {
                f.push(("stats", s.clone()));
            }
            if let Some(e) = &x.error {
                f.push(("error", e.clone()));
            }
            out.push(record("rp", &f));
        }
        for (p, d) in r.entries() {
            out.push(record("entry", &[("profile", p.to_string()), ("data", printable(&d))]));
        }
        for m in &r.missing {
            out.push(record("missing", &[("id", m.to_hex())]));
        }
        return out;
    }
    out.push(format!(
        "{action} op {}: {} rendezvous point(s){}, hops master={} lookup={}",
        r.op,
        r.rp_count(),
        if r.degraded { " (degraded)" } else { "" },
        r.master_hops,
        r.lookup_hops
    ));
    if let Some(e) = &r.error {
        out.push(format!("error: {e}"));
    }
    out.push(format!("{:<10} {:<22} {:>6} {:>7}  {}", "RP", "ENDPOINT", "COUNT", "STARTED", "DETAIL"));
    for x in &r.results {
        let detail = x.error.clone().or_else(|| x.stats.clone()).unwrap_or_default();
        out.push(format!(
            "{:<10} {:<22} {:>6} {:>7}  {}",
            x.rp.short(),
            x.endpoint,
            x.count,
            x.started,
            detail
        ));
    }
    for (p, d) in r.entries() {
        out.push(format!("entry {p} => {}", printable(&d)));
    }
    for m in &r.missing {
        out.push(format!("missing {}", m.short()));
    }
    out
}

pub fn reply_lines(reply: &ClientReply, machine: bool) -> Vec<String> {
    match reply {
        ClientReply::Receipt(r) => receipt_lines(r, machine),
        ClientReply::Records { records, next } => {
            let mut out: Vec<String> = records
                .iter()
                .map(|(off, d)| {
                    if machine {
                        record("record", &[("offset", off.to_string()), ("data", printable(d))])
                    } else {
                        format!("{off:>8}  {}", printable(d))
                    }
                })
                .collect();
            out.push(if machine {
                record("next", &[("offset", next.to_string())])
            } else {
                format!("next offset {next}")
            });
            out
        }
        ClientReply::Lines(lines) => lines.clone(),
        ClientReply::Error(e) => vec![format!("error: {e}")],
    }
}
