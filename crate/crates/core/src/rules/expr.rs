//! Condition language: `IF( expr )` with OR, AND, NOT, comparisons and
//! literals. Field references resolve when the condition is evaluated.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Int(i64),
    Dec(f64),
    Str(String),
    Bool(bool),
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Int(v) => write!(f, "{v}"),
            Scalar::Dec(v) => write!(f, "{v}"),
            Scalar::Str(v) => write!(f, "{v:?}"),
            Scalar::Bool(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    fn holds(self, o: Ordering) -> bool {
        match self {
            CmpOp::Lt => o == Ordering::Less,
            CmpOp::Le => o != Ordering::Greater,
            CmpOp::Gt => o == Ordering::Greater,
            CmpOp::Ge => o != Ordering::Less,
            CmpOp::Eq => o == Ordering::Equal,
            CmpOp::Ne => o != Ordering::Equal,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(Scalar),
    Field(String),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Field(n) => f.write_str(n),
            Expr::Not(e) => write!(f, "NOT ({e})"),
            Expr::And(a, b) => write!(f, "({a} AND {b})"),
            Expr::Or(a, b) => write!(f, "({a} OR {b})"),
            Expr::Cmp(op, a, b) => write!(f, "{a} {} {b}", op.symbol()),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("parse error at {pos}: {msg}")]
pub struct ParseError {
    pub pos: usize,
    pub msg: String,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("unknown field {0}")]
    UnknownField(String),
    #[error("cannot compare {0} with {1}")]
    TypeMismatch(String, String),
    #[error("{0} is not a boolean")]
    NotBoolean(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Dec(f64),
    Str(String),
    Op(CmpOp),
    LParen,
    RParen,
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let b = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |pos, msg: &str| ParseError {
        pos,
        msg: msg.to_string(),
    };
    while i < b.len() {
        let c = b[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\r' | b'\n' => i += 1,
            b'(' => {
                out.push((i, Tok::LParen));
                i += 1;
            }
            b')' => {
                out.push((i, Tok::RParen));
                i += 1;
            }
            b'<' | b'>' | b'=' | b'!' => {
                let two = b.get(i + 1) == Some(&b'=');
                let op = match (c, two) {
                    (b'<', false) => CmpOp::Lt,
                    (b'<', true) => CmpOp::Le,
                    (b'>', false) => CmpOp::Gt,
                    (b'>', true) => CmpOp::Ge,
                    (b'=', true) => CmpOp::Eq,
                    (b'!', true) => CmpOp::Ne,
                    _ => return Err(err(i, "expected comparison operator")),
                };
                out.push((i, Tok::Op(op)));
                i += if two { 2 } else { 1 };
            }
            b'"' => {
                i += 1;
                let mut s = String::new();
                loop {
                    match b.get(i) {
                        None => return Err(err(start, "unterminated string")),
                        Some(b'"') => break,
                        Some(b'\\') => {
                            match b.get(i + 1) {
                                Some(&e @ (b'"' | b'\\')) => s.push(e as char),
                                _ => return Err(err(i, "bad escape")),
                            }
                            i += 2;
                        }
                        Some(_) => {
                            let ch = text[i..].chars().next().unwrap();
                            s.push(ch);
                            i += ch.len_utf8();
                        }
                    }
                }
                i += 1;
                out.push((start, Tok::Str(s)));
            }
            b'0'..=b'9' | b'-' | b'.' => {
                i += 1;
                while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.' || b[i] == b'e' || b[i] == b'E') {
                    i += 1;
                }
                let s = &text[start..i];
                let tok = if s.contains(['.', 'e', 'E']) {
                    Tok::Dec(s.parse().map_err(|_| err(start, "bad number"))?)
                } else {
                    Tok::Int(s.parse().map_err(|_| err(start, "bad number"))?)
                };
                out.push((start, tok));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_' || b[i] == b'.') {
                    i += 1;
                }
                out.push((start, Tok::Ident(text[start..i].to_string())));
            }
            _ => return Err(err(i, "unexpected character")),
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
}

fn is_kw(t: &Tok, kw: &str) -> bool {
    matches!(t, Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|(_, t)| t)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn fail<T>(&self, msg: &str) -> Result<T, ParseError> {
        Err(ParseError {
            pos: self.pos(),
            msg: msg.to_string(),
        })
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.peek().is_some_and(|t| is_kw(t, kw)) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(&want) {
            self.at += 1;
            Ok(())
        } else {
            self.fail(&format!("expected {what}"))
        }
    }

    fn or(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.and()?;
        while self.eat_kw("OR") {
            e = Expr::Or(Box::new(e), Box::new(self.and()?));
        }
        Ok(e)
    }

    fn and(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.not()?;
        while self.eat_kw("AND") {
            e = Expr::And(Box::new(e), Box::new(self.not()?));
        }
        Ok(e)
    }

    fn not(&mut self) -> Result<Expr, ParseError> {
        if self.eat_kw("NOT") {
            return Ok(Expr::Not(Box::new(self.not()?)));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.primary()?;
        if let Some(Tok::Op(op)) = self.peek().cloned() {
            self.at += 1;
            let rhs = self.primary()?;
            return Ok(Expr::Cmp(op, Box::new(lhs), Box::new(rhs)));
        }
        Ok(lhs)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let Some(t) = self.peek().cloned() else {
            return self.fail("unexpected end of condition");
        };
        self.at += 1;
        Ok(match t {
            Tok::LParen => {
                let e = self.or()?;
                self.expect(Tok::RParen, "')'")?;
                e
            }
            Tok::Int(v) => Expr::Lit(Scalar::Int(v)),
            Tok::Dec(v) => Expr::Lit(Scalar::Dec(v)),
            Tok::Str(s) => Expr::Lit(Scalar::Str(s)),
            Tok::Ident(s) if s.eq_ignore_ascii_case("true") => Expr::Lit(Scalar::Bool(true)),
            Tok::Ident(s) if s.eq_ignore_ascii_case("false") => Expr::Lit(Scalar::Bool(false)),
            Tok::Ident(s) if ["AND", "OR", "NOT", "IF"].iter().any(|k| s.eq_ignore_ascii_case(k)) => {
                self.at -= 1;
                return self.fail("keyword where a value was expected");
            }
            Tok::Ident(s) => Expr::Field(s),
            _ => {
                self.at -= 1;
                return self.fail("expected a value");
            }
        })
    }
}

/// Parses `IF( expr )`.
pub fn parse_condition(text: &str) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        at: 0,
        end: text.len(),
    };
    if !p.eat_kw("IF") {
        return p.fail("condition must start with IF(");
    }
    p.expect(Tok::LParen, "'(' after IF")?;
    let e = p.or()?;
    p.expect(Tok::RParen, "')'")?;
    if p.peek().is_some() {
        return p.fail("trailing input after condition");
    }
    Ok(e)
}

pub type Fields = BTreeMap<String, Scalar>;

fn value(e: &Expr, fields: &Fields) -> Result<Scalar, EvalError> {
    match e {
        Expr::Lit(v) => Ok(v.clone()),
        Expr::Field(n) => fields
            .get(n)
            .cloned()
            .ok_or_else(|| EvalError::UnknownField(n.clone())),
        other => Ok(Scalar::Bool(eval(other, fields)?)),
    }
}

fn compare(a: &Scalar, b: &Scalar) -> Result<Option<Ordering>, EvalError> {
    use Scalar::*;
    Ok(match (a, b) {
        (Int(x), Int(y)) => Some(x.cmp(y)),
        (Int(x), Dec(y)) => (*x as f64).partial_cmp(y),
        (Dec(x), Int(y)) => x.partial_cmp(&(*y as f64)),
        (Dec(x), Dec(y)) => x.partial_cmp(y),
        (Str(x), Str(y)) => Some(x.cmp(y)),
        (Bool(x), Bool(y)) => Some(x.cmp(y)),
        _ => return Err(EvalError::TypeMismatch(a.to_string(), b.to_string())),
    })
}

pub fn eval(e: &Expr, fields: &Fields) -> Result<bool, EvalError> {
    match e {
        Expr::Not(x) => Ok(!eval(x, fields)?),
        Expr::And(a, b) => Ok(eval(a, fields)? && eval(b, fields)?),
        Expr::Or(a, b) => Ok(eval(a, fields)? || eval(b, fields)?),
        Expr::Cmp(op, a, b) => {
            let (x, y) = (value(a, fields)?, value(b, fields)?);
            if matches!((&x, &y), (Scalar::Bool(_), Scalar::Bool(_))) && !matches!(op, CmpOp::Eq | CmpOp::Ne) {
                return Err(EvalError::TypeMismatch(x.to_string(), y.to_string()));
            }
            // NaN compares unordered: only != holds
            Ok(match compare(&x, &y)? {
                Some(o) => op.holds(o),
                None => *op == CmpOp::Ne,
            })
        }
        leaf => match value(leaf, fields)? {
            Scalar::Bool(v) => Ok(v),
            other => Err(EvalError::NotBoolean(other.to_string())),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tuple(pairs: &[(&str, Scalar)]) -> Fields {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn listing_rule_shape() {
        let e = parse_condition("IF(RESULT >= 10)").unwrap();
        assert_eq!(
            e,
            Expr::Cmp(CmpOp::Ge, Box::new(Expr::Field("RESULT".into())), Box::new(Expr::Lit(Scalar::Int(10))))
        );
        assert!(eval(&e, &tuple(&[("RESULT", Scalar::Int(12))])).unwrap());
        assert!(!eval(&e, &tuple(&[("RESULT", Scalar::Int(9))])).unwrap());
        assert!(eval(&e, &tuple(&[("RESULT", Scalar::Dec(10.0))])).unwrap());
    }

    #[test]
    fn constants_and_conjunction() {
        assert_eq!(parse_condition("IF(true)").unwrap(), Expr::Lit(Scalar::Bool(true)));
        let e = parse_condition("IF(RESULT >= 10 AND QUALITY == \"low\")").unwrap();
        assert!(matches!(e, Expr::And(..)));
        let t = tuple(&[("RESULT", Scalar::Int(12)), ("QUALITY", Scalar::Str("low".into()))]);
        assert!(eval(&e, &t).unwrap());
    }

    #[test]
    fn precedence() {
        let e = parse_condition("IF(NOT A OR B AND C)").unwrap();
        assert_eq!(e.to_string(), "(NOT (A) OR (B AND C))");
    }

    #[test]
    fn errors_carry_positions() {
        assert_eq!(parse_condition("IF(RESULT >= )").unwrap_err().pos, 13);
        assert_eq!(parse_condition("RESULT > 1").unwrap_err().pos, 0);
        assert!(parse_condition("IF(A > 1").is_err());
        assert!(parse_condition("IF(A > 1) x").is_err());
        assert!(parse_condition("IF(A # 1)").is_err());
        let e = parse_condition("IF(A > 1)").unwrap();
        assert_eq!(
            eval(&e, &tuple(&[("A", Scalar::Str("x".into()))])),
            Err(EvalError::TypeMismatch("\"x\"".into(), "1".into()))
        );
        assert_eq!(eval(&e, &Fields::new()), Err(EvalError::UnknownField("A".into())));
    }
}
