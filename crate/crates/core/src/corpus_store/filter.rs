//! Metadata predicates used to build assemblages.
//!
//! Grammar (keywords are case-insensitive):
//!
//! ```text
//! expr   := and (("or" | "||") and)*
//! and    := unary (("and" | "&&") unary)*
//! unary  := ("not" | "!") unary | "(" expr ")" | "*" | "true" | cmp
//! cmp    := KEY OP VALUE | KEY "in" "[" VALUE ("," VALUE)* "]"
//! OP     := "==" | "!=" | "<" | "<=" | ">" | ">=" | "~"
//! VALUE  := bare-word | "double quoted"
//! ```
//!
//! Comparisons are string comparisons (ISO dates therefore order correctly);
//! `~` is substring containment. A comparison against a key the document
//! lacks is false.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Contains,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    All,
    Cmp { key: String, op: CmpOp, value: String },
    In { key: String, values: Vec<String> },
    Not(Box<Predicate>),
    And(Box<Predicate>, Box<Predicate>),
    Or(Box<Predicate>, Box<Predicate>),
}

impl Predicate {
    pub fn parse(src: &str) -> Result<Self> {
        let tokens = lex(src)?;
        if tokens.is_empty() {
            return Ok(Predicate::All);
        }
        let mut p = Parser { tokens, pos: 0 };
        let pred = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::BadFilter(format!(
                "unexpected `{}`",
                p.tokens[p.pos].text()
            )));
        }
        Ok(pred)
    }

    pub fn keys(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_keys(&mut out);
        out
    }

    fn collect_keys<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            Predicate::All => {}
            Predicate::Cmp { key, .. } | Predicate::In { key, .. } => {
                out.insert(key);
            }
            Predicate::Not(p) => p.collect_keys(out),
            Predicate::And(a, b) | Predicate::Or(a, b) => {
                a.collect_keys(out);
                b.collect_keys(out);
            }
        }
    }

    /// Evaluates against a metadata lookup.
    pub fn eval<F>(&self, lookup: &F) -> bool
    where
        F: Fn(&str) -> Option<String>,
    {
        match self {
            Predicate::All => true,
            Predicate::Cmp { key, op, value } => match lookup(key) {
                None => false,
                Some(v) => match op {
                    CmpOp::Eq => v == *value,
                    CmpOp::Ne => v != *value,
                    CmpOp::Lt => v < *value,
                    CmpOp::Le => v <= *value,
                    CmpOp::Gt => v > *value,
                    CmpOp::Ge => v >= *value,
                    CmpOp::Contains => v.contains(value.as_str()),
                },
            },
            Predicate::In { key, values } => {
                lookup(key).is_some_and(|v| values.iter().any(|x| *x == v))
            }
            Predicate::Not(p) => !p.eval(lookup),
            Predicate::And(a, b) => a.eval(lookup) && b.eval(lookup),
            Predicate::Or(a, b) => a.eval(lookup) || b.eval(lookup),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Quoted(String),
    Op(CmpOp),
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    AndSym,
    OrSym,
    Bang,
}

impl Tok {
    fn text(&self) -> String {
        match self {
            Tok::Word(w) => w.clone(),
            Tok::Quoted(q) => format!("\"{q}\""),
            Tok::Op(op) => format!("{op:?}"),
            Tok::LParen => "(".into(),
            Tok::RParen => ")".into(),
            Tok::LBracket => "[".into(),
            Tok::RBracket => "]".into(),
            Tok::Comma => ",".into(),
            Tok::AndSym => "&&".into(),
            Tok::OrSym => "||".into(),
            Tok::Bang => "!".into(),
        }
    }

    fn is_keyword(&self, kw: &str) -> bool {
        matches!(self, Tok::Word(w) if w.eq_ignore_ascii_case(kw))
    }
}

fn lex(src: &str) -> Result<Vec<Tok>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let next = chars.get(i + 1).copied();
        match c {
            c if c.is_whitespace() => i += 1,
            '(' => { out.push(Tok::LParen); i += 1; }
            ')' => { out.push(Tok::RParen); i += 1; }
            '[' => { out.push(Tok::LBracket); i += 1; }
            ']' => { out.push(Tok::RBracket); i += 1; }
            ',' => { out.push(Tok::Comma); i += 1; }
            '~' => { out.push(Tok::Op(CmpOp::Contains)); i += 1; }
            '=' if next == Some('=') => { out.push(Tok::Op(CmpOp::Eq)); i += 2; }
            '!' if next == Some('=') => { out.push(Tok::Op(CmpOp::Ne)); i += 2; }
            '!' => { out.push(Tok::Bang); i += 1; }
            '<' if next == Some('=') => { out.push(Tok::Op(CmpOp::Le)); i += 2; }
            '<' => { out.push(Tok::Op(CmpOp::Lt)); i += 1; }
            '>' if next == Some('=') => { out.push(Tok::Op(CmpOp::Ge)); i += 2; }
            '>' => { out.push(Tok::Op(CmpOp::Gt)); i += 1; }
            '&' if next == Some('&') => { out.push(Tok::AndSym); i += 2; }
            '|' if next == Some('|') => { out.push(Tok::OrSym); i += 2; }
            '"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    match chars.get(i) {
                        None => return Err(Error::BadFilter("unterminated string".into())),
                        Some('"') => { i += 1; break; }
                        Some('\\') if i + 1 < chars.len() => { s.push(chars[i + 1]); i += 2; }
                        Some(&ch) => { s.push(ch); i += 1; }
                    }
                }
                out.push(Tok::Quoted(s));
            }
            _ => {
                let start = i;
                while i < chars.len() && !is_delimiter(chars[i]) {
                    i += 1;
                }
                if start == i {
                    return Err(Error::BadFilter(format!("unexpected character `{c}`")));
                }
                out.push(Tok::Word(chars[start..i].iter().collect()));
            }
        }
    }
    Ok(out)
}

fn is_delimiter(c: char) -> bool {
    c.is_whitespace() || "()[],~=!<>&|\"".contains(c)
}

struct Parser {
    tokens: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos)
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Tok) -> Result<()> {
        match self.bump() {
            Some(t) if t == want => Ok(()),
            Some(t) => Err(Error::BadFilter(format!("expected `{}`, found `{}`", want.text(), t.text()))),
            None => Err(Error::BadFilter(format!("expected `{}` at end of input", want.text()))),
        }
    }

    fn expr(&mut self) -> Result<Predicate> {
        let mut lhs = self.and()?;
        while let Some(t) = self.peek() {
            if *t == Tok::OrSym || t.is_keyword("or") {
                self.pos += 1;
                let rhs = self.and()?;
                lhs = Predicate::Or(Box::new(lhs), Box::new(rhs));
            } else {
                break;
            }
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Predicate> {
        let mut lhs = self.unary()?;
        while let Some(t) = self.peek() {
            if *t == Tok::AndSym || t.is_keyword("and") {
                self.pos += 1;
                let rhs = self.unary()?;
                lhs = Predicate::And(Box::new(lhs), Box::new(rhs));
            } else {
                break;
            }
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Predicate> {
        match self.peek().cloned() {
            Some(Tok::Bang) => {
                self.pos += 1;
                Ok(Predicate::Not(Box::new(self.unary()?)))
            }
            Some(t) if t.is_keyword("not") => {
                self.pos += 1;
                Ok(Predicate::Not(Box::new(self.unary()?)))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(Tok::RParen)?;
                Ok(inner)
            }
            Some(Tok::Word(w)) if w == "*" || w.eq_ignore_ascii_case("true") => {
                self.pos += 1;
                Ok(Predicate::All)
            }
            Some(Tok::Word(key)) => {
                self.pos += 1;
                self.comparison(key)
            }
            Some(t) => Err(Error::BadFilter(format!("unexpected `{}`", t.text()))),
            None => Err(Error::BadFilter("unexpected end of input".into())),
        }
    }

    fn comparison(&mut self, key: String) -> Result<Predicate> {
        match self.bump() {
            Some(Tok::Op(op)) => {
                let value = self.value()?;
                Ok(Predicate::Cmp { key, op, value })
            }
            Some(t) if t.is_keyword("in") => {
                self.expect(Tok::LBracket)?;
                let mut values = vec![self.value()?];
                while self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                    values.push(self.value()?);
                }
                self.expect(Tok::RBracket)?;
                Ok(Predicate::In { key, values })
            }
            Some(t) => Err(Error::BadFilter(format!("expected operator after `{key}`, found `{}`", t.text()))),
            None => Err(Error::BadFilter(format!("expected operator after `{key}`"))),
        }
    }

    fn value(&mut self) -> Result<String> {
        match self.bump() {
            Some(Tok::Word(w)) | Some(Tok::Quoted(w)) => Ok(w),
            Some(t) => Err(Error::BadFilter(format!("expected value, found `{}`", t.text()))),
            None => Err(Error::BadFilter("expected value at end of input".into())),
        }
    }
}
