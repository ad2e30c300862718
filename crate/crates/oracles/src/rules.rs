//! Conditions as a small tree evaluated directly, and the conflict set by
//! checking every rule.

use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub enum Val {
    Int(i64),
    Dec(f64),
    Str(String),
    Bool(bool),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cond {
    Cmp(Op, String, Val),
    Not(Box<Cond>),
    And(Box<Cond>, Box<Cond>),
    Or(Box<Cond>, Box<Cond>),
    Const(bool),
}

fn render_val(v: &Val) -> String {
    match v {
        Val::Int(i) => i.to_string(),
        Val::Dec(d) => format!("{d:?}"),
        Val::Str(s) => format!("\"{s}\""),
        Val::Bool(b) => b.to_string(),
    }
}

impl Cond {
    /// Source text in the rule condition language, fully parenthesized.
    pub fn render(&self) -> String {
        match self {
            Cond::Cmp(op, f, v) => {
                let sym = match op {
                    Op::Lt => "<",
                    Op::Le => "<=",
                    Op::Gt => ">",
                    Op::Ge => ">=",
                    Op::Eq => "==",
                    Op::Ne => "!=",
                };
                format!("{f} {sym} {}", render_val(v))
            }
            Cond::Not(c) => format!("NOT ({})", c.render()),
            Cond::And(a, b) => format!("({}) AND ({})", a.render(), b.render()),
            Cond::Or(a, b) => format!("({}) OR ({})", a.render(), b.render()),
            Cond::Const(b) => b.to_string(),
        }
    }

    pub fn to_source(&self) -> String {
        format!("IF({})", self.render())
    }
}

fn num(v: &Val) -> Option<f64> {
    match v {
        Val::Int(i) => Some(*i as f64),
        Val::Dec(d) => Some(*d),
        _ => None,
    }
}

fn cmp(op: Op, a: &Val, b: &Val) -> Option<bool> {
    use std::cmp::Ordering::*;
    let ord = match (a, b) {
        (Val::Int(x), Val::Int(y)) => x.cmp(y),
        (Val::Str(x), Val::Str(y)) => x.cmp(y),
        (Val::Bool(x), Val::Bool(y)) => {
            return match op {
                Op::Eq => Some(x == y),
                Op::Ne => Some(x != y),
                _ => None,
            }
        }
        _ => num(a)?.partial_cmp(&num(b)?)?,
    };
    Some(match op {
        Op::Lt => ord == Less,
        Op::Le => ord != Greater,
        Op::Gt => ord == Greater,
        Op::Ge => ord != Less,
        Op::Eq => ord == Equal,
        Op::Ne => ord != Equal,
    })
}

/// `None` when the condition cannot be evaluated (missing field, type
/// mismatch); such a rule is not satisfied.
pub fn holds(c: &Cond, t: &BTreeMap<String, Val>) -> Option<bool> {
    match c {
        Cond::Const(b) => Some(*b),
        Cond::Cmp(op, f, v) => cmp(*op, t.get(f)?, v),
        Cond::Not(x) => Some(!holds(x, t)?),
        Cond::And(a, b) => {
            if !holds(a, t)? {
                Some(false)
            } else {
                holds(b, t)
            }
        }
        Cond::Or(a, b) => {
            if holds(a, t)? {
                Some(true)
            } else {
                holds(b, t)
            }
        }
    }
}

/// Indices of satisfied rules and the one to fire: lowest priority value,
/// earliest declaration on ties.
pub fn conflict_set(rules: &[(Cond, i64)], t: &BTreeMap<String, Val>) -> (Vec<usize>, Option<usize>) {
    let set: Vec<usize> = (0..rules.len()).filter(|&i| holds(&rules[i].0, t) == Some(true)).collect();
    let mut fired: Option<usize> = None;
    for &i in &set {
        match fired {
            Some(j) if rules[j].1 <= rules[i].1 => {}
            _ => fired = Some(i),
        }
    }
    (set, fired)
}

/// The engine's value for an oracle value.
pub fn scalar(v: &Val) -> rpmesh_core::rules::Scalar {
    use rpmesh_core::rules::Scalar;
    match v {
        Val::Int(i) => Scalar::Int(*i),
        Val::Dec(d) => Scalar::Dec(*d),
        Val::Str(s) => Scalar::Str(s.clone()),
        Val::Bool(b) => Scalar::Bool(*b),
    }
}
