//! Content-driven IF-THEN rules. Each incoming tuple runs one cycle: the
//! conflict set is every rule whose condition holds, and at most one of
//! them fires, the lowest priority value first and declaration order on
//! ties.

pub mod expr;

use std::collections::BTreeMap;

use thiserror::Error;

pub use expr::{eval, parse_condition, CmpOp, EvalError, Expr, ParseError, Scalar};

use crate::ar::{Action, Profile};

/// Field injected with the time since the tuple was ingested.
pub const ELAPSED_FIELD: &str = "ELAPSED_MS";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataTuple {
    pub fields: BTreeMap<String, Scalar>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TupleError {
    #[error("tuple is not a JSON object")]
    NotObject,
    #[error("field {0:?} is not a scalar")]
    NotScalar(String),
    #[error("empty field name")]
    EmptyName,
    #[error("bad JSON: {0}")]
    Json(String),
}

impl DataTuple {
    pub fn new() -> Self {
        DataTuple::default()
    }

    pub fn with(mut self, name: &str, v: Scalar) -> Self {
        self.fields.insert(name.to_string(), v);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Scalar> {
        self.fields.get(name)
    }

    /// Reads a flat JSON object of numbers, strings and booleans.
    pub fn from_json(text: &str) -> Result<Self, TupleError> {
        let v: serde_json::Value = serde_json::from_str(text).map_err(|e| TupleError::Json(e.to_string()))?;
        let obj = v.as_object().ok_or(TupleError::NotObject)?;
        let mut fields = BTreeMap::new();
        for (k, v) in obj {
            if k.is_empty() {
                return Err(TupleError::EmptyName);
            }
            let s = match v {
                serde_json::Value::Bool(b) => Scalar::Bool(*b),
                serde_json::Value::String(s) => Scalar::Str(s.clone()),
                serde_json::Value::Number(n) => match n.as_i64() {
                    Some(i) => Scalar::Int(i),
                    None => Scalar::Dec(n.as_f64().ok_or_else(|| TupleError::NotScalar(k.clone()))?),
                },
                _ => return Err(TupleError::NotScalar(k.clone())),
            };
            fields.insert(k.clone(), s);
        }
        Ok(DataTuple { fields })
    }

    pub fn to_json(&self) -> String {
        let obj: serde_json::Map<String, serde_json::Value> = self
            .fields
            .iter()
            .map(|(k, v)| {
                let j = match v {
                    Scalar::Int(i) => serde_json::Value::from(*i),
                    Scalar::Dec(d) => serde_json::Value::from(*d),
                    Scalar::Str(s) => serde_json::Value::from(s.clone()),
                    Scalar::Bool(b) => serde_json::Value::from(*b),
                };
                (k.clone(), j)
            })
            .collect();
        serde_json::Value::Object(obj).to_string()
    }
}

/// What a fired rule does.
#[derive(Debug, Clone, PartialEq)]
pub enum Consequence {
    /// Post a message built from the template; the tuple travels as data.
    Post { action: Action, profile: Profile },
    /// Hand the tuple to a locally registered callback.
    Callback(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub name: String,
    pub condition: Expr,
    pub consequence: Consequence,
    /// Lower fires first; 0 is the highest priority.
    pub priority: i64,
}

impl Rule {
    pub fn new(name: impl Into<String>, condition: &str, consequence: Consequence, priority: i64) -> Result<Self, ParseError> {
        Ok(Rule {
            name: name.into(),
            condition: parse_condition(condition)?,
            consequence,
            priority,
        })
    }
}

/// Receives the consequence of the rule fired in a cycle.
pub trait Dispatcher {
    fn dispatch(&mut self, rule: &Rule, tuple: &DataTuple) -> Result<(), String>;
}

impl<F: FnMut(&Rule, &DataTuple) -> Result<(), String>> Dispatcher for F {
    fn dispatch(&mut self, rule: &Rule, tuple: &DataTuple) -> Result<(), String> {
        self(rule, tuple)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CycleOutcome {
    /// Indices of satisfied rules, in declaration order.
    pub conflict_set: Vec<usize>,
    pub fired: Option<usize>,
    pub dispatch_error: Option<String>,
    pub eval_errors: Vec<(usize, EvalError)>,
}

#[derive(Debug, Clone, Default)]
pub struct RuleEngine {
    rules: Vec<Rule>,
    pub cycles: u64,
    pub fired: u64,
}

impl RuleEngine {
    pub fn new(rules: Vec<Rule>) -> Self {
        RuleEngine {
            rules,
            ..RuleEngine::default()
        }
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn push(&mut self, rule: Rule) {
        self.rules.push(rule);
    }

    pub fn replace(&mut self, rules: Vec<Rule>) {
        self.rules = rules;
    }

    /// Satisfied rules and the one that would fire, without dispatching.
    pub fn select(&self, tuple: &DataTuple) -> CycleOutcome {
        let mut out = CycleOutcome::default();
        for (i, r) in self.rules.iter().enumerate() {
            match eval(&r.condition, &tuple.fields) {
                Ok(true) => out.conflict_set.push(i),
                Ok(false) => {}
                Err(e) => out.eval_errors.push((i, e)),
            }
        }
        out.fired = out
            .conflict_set
            .iter()
            .copied()
            .min_by_key(|&i| (self.rules[i].priority, i));
        out
    }

    /// Runs one cycle and dispatches at most one consequence. A failed
    /// dispatch still counts as fired.
    pub fn evaluate_cycle(&mut self, tuple: &DataTuple, dispatcher: &mut dyn Dispatcher) -> CycleOutcome {
        let mut out = self.select(tuple);
        self.cycles += 1;
        if let Some(i) = out.fired {
            self.fired += 1;
            if let Err(e) = dispatcher.dispatch(&self.rules[i], tuple) {
                out.dispatch_error = Some(e);
            }
        }
        out
    }

    /// Like `evaluate_cycle`, with the ingest age injected as `ELAPSED_MS`.
    pub fn evaluate_at(
        &mut self,
        tuple: &DataTuple,
        ingested_ms: u64,
        now_ms: u64,
        dispatcher: &mut dyn Dispatcher,
    ) -> CycleOutcome {
        let mut t = tuple.clone();
        t.fields.insert(
            ELAPSED_FIELD.to_string(),
            Scalar::Int(now_ms.saturating_sub(ingested_ms) as i64),
        );
        self.evaluate_cycle(&t, dispatcher)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("rule file line {line}: {msg}")]
pub struct RuleFileError {
    pub line: usize,
    pub msg: String,
}

fn parse_then(text: &str, line: usize) -> Result<Consequence, RuleFileError> {
    let err = |msg: String| RuleFileError { line, msg };
    let mut words = text.split_whitespace();
    match words.next() {
        Some("post") => {
            let action: Action = words
                .next()
                .ok_or_else(|| err("post needs an action".into()))?
                .parse()
                .map_err(err)?;
            let rest: Vec<&str> = words.collect();
            let profile = Profile::parse(&rest.join(" ")).map_err(|e| err(e.to_string()))?;
            Ok(Consequence::Post { action, profile })
        }
        Some("callback") => {
            let id = words.next().ok_or_else(|| err("callback needs an id".into()))?;
            Ok(Consequence::Callback(id.to_string()))
        }
        _ => Err(err(format!("unknown consequence {text:?}"))),
    }
}

/// Parses stanzas of `priority:`, `when:`, `then:` (and optional `name:`)
/// separated by blank lines. `#` starts a comment line.
pub fn parse_rule_file(text: &str) -> Result<Vec<Rule>, RuleFileError> {
    struct Pending {
        start: usize,
        name: Option<String>,
        priority: Option<i64>,
        when: Option<(usize, String)>,
        then: Option<Consequence>,
    }
    fn finish(p: Pending, index: usize) -> Result<Rule, RuleFileError> {
        let missing = |what: &str| RuleFileError {
            line: p.start,
            msg: format!("stanza lacks {what}"),
        };
        let (wline, when) = p.when.ok_or_else(|| missing("when:"))?;
        Ok(Rule {
            name: p.name.unwrap_or_else(|| format!("rule{index}")),
            condition: parse_condition(&when).map_err(|e| RuleFileError {
                line: wline,
                msg: e.to_string(),
            })?,
            consequence: p.then.ok_or_else(|| missing("then:"))?,
            priority: p.priority.unwrap_or(0),
        })
    }
    let mut rules = Vec::new();
    let mut cur: Option<Pending> = None;
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let l = raw.trim();
        if l.starts_with('#') {
            continue;
        }
        if l.is_empty() {
            if let Some(p) = cur.take() {
                rules.push(finish(p, rules.len())?);
            }
            continue;
        }
        let (key, value) = l.split_once(':').ok_or_else(|| RuleFileError {
            line,
            msg: format!("expected key: value, got {l:?}"),
        })?;
        let value = value.trim();
        let p = cur.get_or_insert(Pending {
            start: line,
            name: None,
            priority: None,
            when: None,
            then: None,
        });
        match key.trim() {
            "name" => p.name = Some(value.to_string()),
            "priority" => {
                p.priority = Some(value.parse().map_err(|_| RuleFileError {
                    line,
                    msg: format!("bad priority {value:?}"),
                })?)
            }
            "when" => p.when = Some((line, value.to_string())),
            "then" => p.then = Some(parse_then(value, line)?),
            other => {
                return Err(RuleFileError {
                    line,
                    msg: format!("unknown key {other:?}"),
                })
            }
        }
    }
    if let Some(p) = cur.take() {
        rules.push(finish(p, rules.len())?);
    }
    Ok(rules)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn start(profile: &str) -> Consequence {
        Consequence::Post {
            action: Action::StartFunction,
            profile: Profile::parse(profile).unwrap(),
        }
    }

    #[test]
    fn fires_lowest_priority_once() {
        let mut e = RuleEngine::new(vec![
            Rule::new("low", "IF(RESULT > 0)", Consequence::Callback("b".into()), 1).unwrap(),
            Rule::new("high", "IF(RESULT > 5)", Consequence::Callback("a".into()), 0).unwrap(),
            Rule::new("tie", "IF(RESULT > 5)", Consequence::Callback("c".into()), 0).unwrap(),
        ]);
        let mut calls = Vec::new();
        let mut d = |r: &Rule, _: &DataTuple| {
            calls.push(r.name.clone());
            Ok(())
        };
        let out = e.evaluate_cycle(&DataTuple::new().with("RESULT", Scalar::Int(9)), &mut d);
        assert_eq!(out.conflict_set, vec![0, 1, 2]);
        assert_eq!(out.fired, Some(1));
        let out = e.evaluate_cycle(&DataTuple::new().with("RESULT", Scalar::Int(-1)), &mut d);
        assert_eq!(out.fired, None);
        assert_eq!(calls, vec!["high"]);
    }

    #[test]
    fn elapsed_field_drives_quality_rules() {
        let mut e = RuleEngine::new(vec![
            Rule::new("late", "IF(ELAPSED_MS > 500)", Consequence::Callback("drop".into()), 0).unwrap(),
            Rule::new("content", "IF(RESULT >= 10)", start("post_processing_func"), 1).unwrap(),
        ]);
        let t = DataTuple::new().with("RESULT", Scalar::Int(12));
        let mut names = Vec::new();
        let mut d = |r: &Rule, _: &DataTuple| {
            names.push(r.name.clone());
            Ok(())
        };
        e.evaluate_at(&t, 0, 100, &mut d);
        e.evaluate_at(&t, 0, 900, &mut d);
        assert_eq!(names, vec!["content", "late"]);
    }

    #[test]
    fn dispatch_failure_still_counts() {
        let mut e = RuleEngine::new(vec![Rule::new("r", "IF(true)", Consequence::Callback("x".into()), 0).unwrap()]);
        let mut d = |_: &Rule, _: &DataTuple| Err("boom".to_string());
        let out = e.evaluate_cycle(&DataTuple::new(), &mut d);
        assert_eq!(out.fired, Some(0));
        assert_eq!(out.dispatch_error.as_deref(), Some("boom"));
        assert_eq!(e.fired, 1);
    }

    #[test]
    fn rule_file_and_json_tuples() {
        let text = "# demo\npriority: 0\nwhen: IF(RESULT >= 10)\nthen: post start-function post_processing_func\n\nname: cb\npriority: 3\nwhen: IF(QUALITY == \"low\")\nthen: callback alert\n";
        let rules = parse_rule_file(text).unwrap();
        assert_eq!(rules.len(), 2);
        assert_eq!(rules[0].consequence, start("post_processing_func"));
        assert_eq!(rules[1].name, "cb");
        assert_eq!(rules[1].priority, 3);
        assert!(parse_rule_file("when: IF(\n").is_err());
        assert_eq!(parse_rule_file("priority: 1\nthen: callback x\n").unwrap_err().line, 1);
        let t = DataTuple::from_json(r#"{"RESULT": 12, "QUALITY": "low", "ok": true, "x": 1.5}"#).unwrap();
        assert_eq!(t.get("RESULT"), Some(&Scalar::Int(12)));
        assert_eq!(DataTuple::from_json(&t.to_json()).unwrap(), t);
        assert!(DataTuple::from_json("[1]").is_err());
        assert!(DataTuple::from_json(r#"{"a": [1]}"#).is_err());
    }
}
