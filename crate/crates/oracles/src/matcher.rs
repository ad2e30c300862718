//! Associative satisfaction by witness search.
//!
//! A stored term meets a query term when some concrete keyword
//! (attribute, optional value) is accepted by both. Candidates are every
//! literal that appears in either term plus all short strings over the
//! literals' characters, so the search never reasons about pattern shapes.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rpmesh_core::ar::{Profile, Term};

const ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz0123456789.-:_";

fn rank(c: char) -> usize {
    ALPHABET.find(c).map_or(0, |i| i + 1)
}

/// Keyword order: characters by alphabet rank, a missing character ranks
/// below every real one.
pub fn keyword_cmp(a: &str, b: &str) -> Ordering {
    let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
    for i in 0..a.len().max(b.len()) {
        let x = a.get(i).map_or(0, |c| rank(*c));
        let y = b.get(i).map_or(0, |c| rank(*c));
        if x != y {
            return x.cmp(&y);
        }
    }
    Ordering::Equal
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Keyword {
    pub attr: String,
    pub value: Option<String>,
}

pub fn accepts(t: &Term, k: &Keyword) -> bool {
    let val = k.value.as_deref();
    match t {
        Term::Any => true,
        Term::AttrPrefix(p) => k.attr.starts_with(p.as_str()),
        Term::Attr(a) => k.attr == *a,
        Term::Exact { attr, value } => k.attr == *attr && val == Some(value.as_str()),
        Term::Prefix { attr, prefix } => k.attr == *attr && val.is_some_and(|v| v.starts_with(prefix.as_str())),
        Term::AnyValue { attr } => k.attr == *attr && val.is_some(),
        Term::Range { attr, lo, hi } => {
            k.attr == *attr
                && val.is_some_and(|v| keyword_cmp(lo, v) != Ordering::Greater && keyword_cmp(v, hi) != Ordering::Greater)
        }
    }
}

fn literals(t: &Term) -> (Vec<String>, Vec<String>) {
    match t {
        Term::Any => (vec![], vec![]),
        Term::AttrPrefix(p) => (vec![p.clone()], vec![]),
        Term::Attr(a) | Term::AnyValue { attr: a } => (vec![a.clone()], vec![]),
        Term::Exact { attr, value } => (vec![attr.clone()], vec![value.clone()]),
        Term::Prefix { attr, prefix } => (vec![attr.clone()], vec![prefix.clone()]),
        Term::Range { attr, lo, hi } => (vec![attr.clone()], vec![lo.clone(), hi.clone()]),
    }
}

/// Strings of length 1..=max over `chars`.
fn short_strings(chars: &BTreeSet<char>, max: usize) -> Vec<String> {
    let mut out = Vec::new();
    let mut layer = vec![String::new()];
    for _ in 0..max {
        let mut next = Vec::new();
        for s in &layer {
            for c in chars {
                let mut t = s.clone();
                t.push(*c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

pub fn meet(a: &Term, b: &Term) -> bool {
    let (mut attrs, mut values) = literals(a);
    let (a2, v2) = literals(b);
    attrs.extend(a2);
    values.extend(v2);
    let chars: BTreeSet<char> = attrs.iter().chain(values.iter()).flat_map(|s| s.chars()).collect();
    let extra = short_strings(&chars, 1);
    let mut attr_c: BTreeSet<String> = attrs.into_iter().collect();
    attr_c.extend(extra.iter().cloned());
    if attr_c.is_empty() {
        attr_c.insert("x".into());
    }
    let mut val_c: BTreeSet<Option<String>> = values.into_iter().map(Some).collect();
    val_c.extend(extra.into_iter().map(Some));
    val_c.insert(None);
    val_c.insert(Some("x".into()));
    for attr in &attr_c {
        for value in &val_c {
            let k = Keyword {
                attr: attr.clone(),
                value: value.clone(),
            };
            if accepts(a, &k) && accepts(b, &k) {
                return true;
            }
        }
    }
    false
}

/// Every query term is met by some stored term; a bare `*` query term
/// needs nothing.
pub fn satisfies(stored: &Profile, query: &Profile) -> bool {
    query
        .terms()
        .iter()
        .all(|q| matches!(q, Term::Any) || stored.terms().iter().any(|s| meet(s, q)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Profile {
        Profile::parse(s).unwrap()
    }

    #[test]
    fn hand_cases() {
        assert!(satisfies(&p("drone,lidar"), &p("drone")));
        assert!(satisfies(&p("temp:15"), &p("temp:10..20")));
        assert!(!satisfies(&p("temp:25"), &p("temp:10..20")));
        assert!(satisfies(&p("li*"), &p("lidar")));
        assert!(!satisfies(&p("lat:*"), &p("long:1")));
        assert!(satisfies(&p("a"), &p("*")));
        assert!(!satisfies(&p(""), &p("a")));
        assert!(satisfies(&p("k:ab*"), &p("k:a..b")));
    }

    #[test]
    fn order_pads_low() {
        assert_eq!(keyword_cmp("a", "ab"), Ordering::Less);
        assert_eq!(keyword_cmp("b", "ab"), Ordering::Greater);
        assert_eq!(keyword_cmp("9", "a"), Ordering::Greater);
    }
}
