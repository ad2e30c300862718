//! Random profiles over a deliberately tiny vocabulary, so that pairs
//! collide often enough to exercise every matching branch.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use rpmesh_core::ar::{Profile, Term};

use crate::rules::{Cond, Op, Val};

const ATTRS: &[&str] = &["a", "b", "ab", "ba", "c"];
const VALUES: &[&str] = &["a", "b", "ab", "ba", "abc", "1", "2", "10", "b1"];

fn word<R: Rng>(rng: &mut R, pool: &[&str]) -> String {
    pool.choose(rng).expect("non-empty").to_string()
}

pub fn term<R: Rng>(rng: &mut R) -> Term {
    let attr = word(rng, ATTRS);
    let text = match rng.random_range(0..10) {
        0 => "*".to_string(),
        1 => format!("{}*", &attr[..1]),
        2 => attr,
        3 | 4 => format!("{attr}:{}", word(rng, VALUES)),
        5 => format!("{attr}:{}*", &word(rng, VALUES)[..1]),
        6 => format!("{attr}:*"),
        _ => {
            let (x, y) = (word(rng, VALUES), word(rng, VALUES));
            match Term::parse(&format!("{attr}:{x}..{y}")) {
                Ok(_) => format!("{attr}:{x}..{y}"),
                Err(_) => format!("{attr}:{y}..{x}"),
            }
        }
    };
    Term::parse(&text).expect("generated term parses")
}

/// Exact terms only.
pub fn simple_term<R: Rng>(rng: &mut R) -> Term {
    let attr = word(rng, ATTRS);
    let text = if rng.random_bool(0.3) {
        attr
    } else {
        format!("{attr}:{}", word(rng, VALUES))
    };
    Term::parse(&text).expect("generated term parses")
}

pub fn profile<R: Rng>(rng: &mut R, max_terms: usize) -> Profile {
    let n = rng.random_range(0..=max_terms);
    Profile::new((0..n).map(|_| term(rng)).collect())
}

pub fn simple_profile<R: Rng>(rng: &mut R, terms: usize) -> Profile {
    Profile::new((0..terms).map(|_| simple_term(rng)).collect())
}

const LEADS: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789";

fn lead_word<R: Rng>(rng: &mut R) -> String {
    let n = rng.random_range(1..6);
    (0..n).map(|_| *LEADS.choose(rng).expect("non-empty") as char).collect()
}

/// Profiles spread over the whole keyword space of `dims` axes, for
/// routing runs. Complex profiles mix prefixes, wildcards, ranges and
/// missing trailing terms.
pub fn routing_profile<R: Rng>(rng: &mut R, dims: usize, simple: bool) -> Profile {
    if simple {
        let text: Vec<String> = (0..dims).map(|_| lead_word(rng)).collect();
        return Profile::parse(&text.join(",")).expect("simple profile parses");
    }
    let n = rng.random_range(1..=dims);
    loop {
        let text: Vec<String> = (0..n)
            .map(|_| match rng.random_range(0..10) {
                0..=2 => lead_word(rng),
                3..=5 => format!("{}*", &lead_word(rng)[..1]),
                6 => "*".to_string(),
                _ => {
                    let (mut a, mut b) = (lead_word(rng), lead_word(rng));
                    if b < a {
                        std::mem::swap(&mut a, &mut b);
                    }
                    format!("k:{a}..{b}")
                }
            })
            .collect();
        if let Ok(p) = Profile::parse(&text.join(",")) {
            if !(n == dims && p.is_simple()) {
                return p;
            }
        }
    }
}

/// Store corpus: mostly simple profiles, some complex, small data so that
/// duplicates occur.
pub fn store_corpus<R: Rng>(rng: &mut R, n: usize) -> Vec<(Profile, Vec<u8>)> {
    (0..n)
        .map(|_| {
            let p = if rng.random_bool(0.6) {
                let k = rng.random_range(1..=4);
                simple_profile(rng, k)
            } else {
                profile(rng, 3)
            };
            let data = vec![rng.random_range(0..4u8); rng.random_range(0..3)];
            (p, data)
        })
        .collect()
}

pub const RULE_FIELDS: &[&str] = &["RESULT", "QUALITY", "TEMP", "OK"];

pub fn rule_val<R: Rng>(rng: &mut R) -> Val {
    match rng.random_range(0..8) {
        0..=3 => Val::Int(rng.random_range(-3..15)),
        4 => Val::Dec(rng.random_range(-6..30) as f64 / 2.0),
        5 | 6 => Val::Str(["low", "high", "mid"].choose(rng).expect("non-empty").to_string()),
        _ => Val::Bool(rng.random()),
    }
}

pub fn rule_cond<R: Rng>(rng: &mut R, depth: u32) -> Cond {
    if depth == 0 || rng.random_bool(0.5) {
        if rng.random_bool(0.05) {
            return Cond::Const(rng.random());
        }
        let op = *[Op::Lt, Op::Le, Op::Gt, Op::Ge, Op::Eq, Op::Ne].choose(rng).expect("non-empty");
        return Cond::Cmp(op, RULE_FIELDS.choose(rng).expect("non-empty").to_string(), rule_val(rng));
    }
    match rng.random_range(0..3) {
        0 => Cond::Not(Box::new(rule_cond(rng, depth - 1))),
        1 => Cond::And(Box::new(rule_cond(rng, depth - 1)), Box::new(rule_cond(rng, depth - 1))),
        _ => Cond::Or(Box::new(rule_cond(rng, depth - 1)), Box::new(rule_cond(rng, depth - 1))),
    }
}

/// A tuple over the rule fields, each present with probability 0.85.
pub fn rule_tuple<R: Rng>(rng: &mut R) -> BTreeMap<String, Val> {
    let mut fields = BTreeMap::new();
    for f in RULE_FIELDS {
        if rng.random_bool(0.85) {
            fields.insert(f.to_string(), rule_val(rng));
        }
    }
    fields
}
