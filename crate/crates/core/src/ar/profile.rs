use std::cmp::Ordering;
use std::fmt;

use thiserror::Error;

use crate::constants::NUMERIC_WIDTH;
use crate::sfc::{is_keyword_char, positional_cmp};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProfileError {
    #[error("invalid term {term:?}: {reason}")]
    InvalidTerm { term: String, reason: &'static str },
}

fn invalid(term: &str, reason: &'static str) -> ProfileError {
    ProfileError::InvalidTerm {
        term: term.to_string(),
        reason,
    }
}

/// Kind of a profile term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TermKind {
    Exact,
    Partial,
    Wildcard,
    Range,
    AttributeOnly,
}

/// One element of a profile: an attribute, or an attribute with a value
/// pattern. Text is case-folded on construction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    /// `*`: anything.
    Any,
    /// `li*`: an attribute whose name starts with the prefix.
    AttrPrefix(String),
    /// `drone`: the attribute is present.
    Attr(String),
    /// `lat:40.0583`
    Exact { attr: String, value: String },
    /// `lat:40*`
    Prefix { attr: String, prefix: String },
    /// `lat:*`: the attribute carries some value.
    AnyValue { attr: String },
    /// `temp:10..20`, bounds compared in positional order.
    Range { attr: String, lo: String, hi: String },
}

fn check_word(term: &str, word: &str) -> Result<String, ProfileError> {
    if word.is_empty() {
        return Err(invalid(term, "empty keyword"));
    }
    if word.contains('*') {
        return Err(invalid(term, "'*' only allowed in final position"));
    }
    if word.contains("..") {
        return Err(invalid(term, "'..' only allowed between range bounds"));
    }
    if !word.chars().all(is_keyword_char) {
        return Err(invalid(term, "character outside the keyword alphabet"));
    }
    Ok(word.to_ascii_lowercase())
}

/// Zero-pads all-digit values so they compare numerically.
fn canonical_value(v: String) -> String {
    if !v.is_empty() && v.len() < NUMERIC_WIDTH && v.bytes().all(|b| b.is_ascii_digit()) {
        format!("{v:0>width$}", width = NUMERIC_WIDTH)
    } else {
        v
    }
}

impl Term {
    /// Parses one term of the textual profile syntax.
    pub fn parse(text: &str) -> Result<Term, ProfileError> {
        let text = text.trim();
        if text.is_empty() {
            return Err(invalid(text, "empty term"));
        }
        if text == "*" {
            return Ok(Term::Any);
        }
        let Some((attr, value)) = text.split_once(':') else {
            return match text.strip_suffix('*') {
                Some(prefix) => Ok(Term::AttrPrefix(check_word(text, prefix)?)),
                None => Ok(Term::Attr(check_word(text, text)?)),
            };
        };
        let attr = check_word(text, attr)?;
        if value == "*" {
            return Ok(Term::AnyValue { attr });
        }
        if let Some(prefix) = value.strip_suffix('*') {
            return Ok(Term::Prefix {
                attr,
                prefix: check_word(text, prefix)?,
            });
        }
        if let Some((lo, hi)) = value.split_once("..") {
            let lo = canonical_value(check_word(text, lo)?);
            let hi = canonical_value(check_word(text, hi)?);
            if positional_cmp(&lo, &hi) == Ordering::Greater {
                return Err(invalid(text, "range bounds out of order"));
            }
            return Ok(Term::Range { attr, lo, hi });
        }
        Ok(Term::Exact {
            attr,
            value: canonical_value(check_word(text, value)?),
        })
    }

    pub fn kind(&self) -> TermKind {
        match self {
            Term::Any | Term::AnyValue { .. } => TermKind::Wildcard,
            Term::AttrPrefix(_) | Term::Prefix { .. } => TermKind::Partial,
            Term::Attr(_) => TermKind::AttributeOnly,
            Term::Exact { .. } => TermKind::Exact,
            Term::Range { .. } => TermKind::Range,
        }
    }

    /// Attribute name, or the attribute prefix for `AttrPrefix`.
    pub fn attribute(&self) -> &str {
        match self {
            Term::Any => "",
            Term::AttrPrefix(a) | Term::Attr(a) => a,
            Term::Exact { attr, .. }
            | Term::Prefix { attr, .. }
            | Term::AnyValue { attr }
            | Term::Range { attr, .. } => attr,
        }
    }

    /// Exact terms route to a single coordinate.
    pub fn is_exact(&self) -> bool {
        matches!(self, Term::Attr(_) | Term::Exact { .. })
    }

    /// Keyword text used to place the term on its axis (ranges are handled
    /// by the caller from their bounds).
    pub fn routing_text(&self) -> String {
        match self {
            Term::Any => "*".to_string(),
            Term::AttrPrefix(p) => format!("{p}*"),
            Term::Attr(a) => a.clone(),
            Term::Exact { attr, value } => format!("{attr}:{value}"),
            Term::Prefix { attr, prefix } => format!("{attr}:{prefix}*"),
            Term::AnyValue { attr } => format!("{attr}:*"),
            Term::Range { attr, lo, .. } => format!("{attr}:{lo}"),
        }
    }

    /// Whether some concrete attribute/value could satisfy both terms.
    /// Symmetric, so a stored pattern meets a query exact term and the
    /// other way round.
    pub fn compatible(&self, other: &Term) -> bool {
        if matches!(self, Term::Any) || matches!(other, Term::Any) {
            return true;
        }
        attrs_meet(self, other) && values_meet(&value_pattern(self), &value_pattern(other))
    }
}

fn attrs_meet(a: &Term, b: &Term) -> bool {
    match (a, b) {
        (Term::AttrPrefix(p), Term::AttrPrefix(q)) => p.starts_with(q.as_str()) || q.starts_with(p.as_str()),
        (Term::AttrPrefix(p), other) | (other, Term::AttrPrefix(p)) => {
            other.attribute().starts_with(p.as_str())
        }
        (x, y) => x.attribute() == y.attribute(),
    }
}

enum ValuePattern<'a> {
    /// No constraint at all, absent value included.
    Unconstrained,
    Exact(&'a str),
    Prefix(&'a str),
    Present,
    Range(&'a str, &'a str),
}

fn value_pattern(t: &Term) -> ValuePattern<'_> {
    match t {
        Term::Any | Term::AttrPrefix(_) | Term::Attr(_) => ValuePattern::Unconstrained,
        Term::Exact { value, .. } => ValuePattern::Exact(value),
        Term::Prefix { prefix, .. } => ValuePattern::Prefix(prefix),
        Term::AnyValue { .. } => ValuePattern::Present,
        Term::Range { lo, hi, .. } => ValuePattern::Range(lo, hi),
    }
}

fn in_range(v: &str, lo: &str, hi: &str) -> bool {
    positional_cmp(lo, v) != Ordering::Greater && positional_cmp(v, hi) != Ordering::Greater
}

fn prefix_meets_range(p: &str, lo: &str, hi: &str) -> bool {
    if positional_cmp(lo, p) != Ordering::Greater {
        positional_cmp(p, hi) != Ordering::Greater
    } else {
        lo.starts_with(p)
    }
}

fn values_meet(a: &ValuePattern<'_>, b: &ValuePattern<'_>) -> bool {
    use ValuePattern::*;
    match (a, b) {
        (Unconstrained, _) | (_, Unconstrained) => true,
        (Present, _) | (_, Present) => true,
        (Exact(v), Exact(w)) => v == w,
        (Exact(v), Prefix(p)) | (Prefix(p), Exact(v)) => v.starts_with(p),
        (Exact(v), Range(lo, hi)) | (Range(lo, hi), Exact(v)) => in_range(v, lo, hi),
        (Prefix(p), Prefix(q)) => p.starts_with(q) || q.starts_with(p),
        (Prefix(p), Range(lo, hi)) | (Range(lo, hi), Prefix(p)) => prefix_meets_range(p, lo, hi),
        (Range(l1, h1), Range(l2, h2)) => {
            let lo = if positional_cmp(l1, l2) == Ordering::Greater { l1 } else { l2 };
            let hi = if positional_cmp(h1, h2) == Ordering::Less { h1 } else { h2 };
            positional_cmp(lo, hi) != Ordering::Greater
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Range { attr, lo, hi } => write!(f, "{attr}:{lo}..{hi}"),
            other => f.write_str(&other.routing_text()),
        }
    }
}

/// Ordered keyword tuple naming data, interests or functions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Profile {
    terms: Vec<Term>,
}

impl Profile {
    pub fn new(terms: Vec<Term>) -> Self {
        Profile { terms }
    }

    /// Parses the comma-separated textual syntax. The empty string is the
    /// empty profile.
    pub fn parse(text: &str) -> Result<Profile, ProfileError> {
        if text.trim().is_empty() {
            return Ok(Profile::default());
        }
        text.split(',')
            .map(Term::parse)
            .collect::<Result<Vec<_>, _>>()
            .map(Profile::new)
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn push(&mut self, term: Term) {
        self.terms.push(term);
    }

    /// True when every term is exact.
    pub fn is_simple(&self) -> bool {
        self.terms.iter().all(Term::is_exact)
    }

    /// Canonical text, the byte form used for digests.
    pub fn canonical(&self) -> String {
        self.to_string()
    }

    /// Exact per-term equality, positionally.
    pub fn same_terms(&self, other: &Profile) -> bool {
        self.terms == other.terms
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{t}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for Profile {
    type Err = ProfileError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Profile::parse(s)
    }
}

/// Associative selection: every query term must be met by some term of the
/// stored profile. A bare `*` query term always holds.
pub fn matches(stored: &Profile, query: &Profile) -> bool {
    query.terms().iter().all(|q| {
        matches!(q, Term::Any) || stored.terms().iter().any(|s| s.compatible(q))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> Profile {
        Profile::parse(s).unwrap()
    }

    #[test]
    fn parses_every_term_form() {
        assert_eq!(Term::parse("*").unwrap(), Term::Any);
        assert_eq!(Term::parse("Li*").unwrap(), Term::AttrPrefix("li".into()));
        assert_eq!(Term::parse("Drone").unwrap(), Term::Attr("drone".into()));
        assert_eq!(
            Term::parse("lat:40.0583").unwrap(),
            Term::Exact {
                attr: "lat".into(),
                value: "40.0583".into()
            }
        );
        assert_eq!(
            Term::parse("long:-74*").unwrap(),
            Term::Prefix {
                attr: "long".into(),
                prefix: "-74".into()
            }
        );
        assert_eq!(
            Term::parse("lat:*").unwrap(),
            Term::AnyValue { attr: "lat".into() }
        );
        assert_eq!(
            Term::parse("t:5..20").unwrap(),
            Term::Range {
                attr: "t".into(),
                lo: "000000000005".into(),
                hi: "000000000020".into()
            }
        );
    }

    #[test]
    fn rejects_malformed_terms() {
        for bad in ["dr*ne", "a b", "x:1..", "x:b..a", "", "x:", "x:a*b", ":v", "x:a..b*"] {
            assert!(Term::parse(bad).is_err(), "{bad:?}");
        }
    }

    #[test]
    fn display_round_trips() {
        let text = "drone,li*,lat:40*,long:-74.4056,t:000000000001..000000000009,x:*,*";
        assert_eq!(p(text).to_string(), text);
        assert_eq!(p(&p(text).to_string()), p(text));
    }

    #[test]
    fn consumer_profile_matches_producer() {
        let stored = p("Drone,LiDAR,lat:40.0583,long:-74.4056");
        let query = p("Drone,Li*,lat:40*,long:-74*");
        assert!(matches(&stored, &query));
    }

    #[test]
    fn empty_query_matches_anything() {
        assert!(matches(&p("drone"), &p("")));
        assert!(matches(&p(""), &p("")));
        assert!(matches(&p(""), &p("*")));
    }

    #[test]
    fn exact_mismatch() {
        assert!(!matches(&p("Drone,LiDAR"), &p("Drone,Radar")));
    }

    #[test]
    fn stored_pattern_meets_exact_query() {
        assert!(matches(&p("drone,li*"), &p("drone,lidar")));
        assert!(matches(&p("t:10..20"), &p("t:15")));
        assert!(!matches(&p("t:10..20"), &p("t:25")));
    }

    #[test]
    fn numeric_ranges_compare_numerically() {
        assert!(matches(&p("t:9"), &p("t:5..10")));
        assert!(!matches(&p("t:11"), &p("t:5..10")));
    }

    #[test]
    fn prefix_against_range() {
        assert!(Term::parse("a:b*").unwrap().compatible(&Term::parse("a:a..bb").unwrap()));
        assert!(Term::parse("a:b*").unwrap().compatible(&Term::parse("a:ba..c").unwrap()));
        assert!(!Term::parse("a:b*").unwrap().compatible(&Term::parse("a:c..d").unwrap()));
        assert!(!Term::parse("a:bb*").unwrap().compatible(&Term::parse("a:a..b").unwrap()));
    }
}
