//! Field search language.
//!
//! ```text
//! expr    := or
//! or      := and ("|" and)*
//! and     := unary ("&" unary)*
//! unary   := "!" unary | primary
//! primary := "(" expr ")" | term
//! term    := [field ":"] (word | "quoted phrase")
//! ```
//!
//! Fields: `au` author surname, `ti` title words, `py` year or `y1-y2`,
//! `so` serial words, `cc` MSC prefix, `an` record id. A term without a
//! field searches titles.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Corpus, RecordId};
use crate::index::{fold, normalize};

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub enum QueryError {
    #[error("syntax error at byte {offset}: {message}")]
    SyntaxError { offset: usize, message: String },
    #[error("unknown field `{field}` at byte {offset}")]
    UnknownField { field: String, offset: usize },
}

impl QueryError {
    pub fn offset(&self) -> usize {
        match self {
            QueryError::SyntaxError { offset, .. } | QueryError::UnknownField { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Field {
    Au,
    Ti,
    Py,
    So,
    Cc,
    An,
}

impl Field {
    pub const ALL: [Field; 6] = [Field::Au, Field::Ti, Field::Py, Field::So, Field::Cc, Field::An];

    pub fn code(self) -> &'static str {
        match self {
            Field::Au => "au",
            Field::Ti => "ti",
            Field::Py => "py",
            Field::So => "so",
            Field::Cc => "cc",
            Field::An => "an",
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.code() == code)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Value {
    Text(String),
    Years { from: i32, to: i32 },
    Id(RecordId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Query {
    Term { field: Field, value: Value },
    And(Box<Query>, Box<Query>),
    Or(Box<Query>, Box<Query>),
    Not(Box<Query>),
}

impl Query {
    pub fn and(a: Query, b: Query) -> Query {
        Query::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Query, b: Query) -> Query {
        Query::Or(Box::new(a), Box::new(b))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: Query) -> Query {
        Query::Not(Box::new(a))
    }

    pub fn depth(&self) -> usize {
        match self {
            Query::Term { .. } => 1,
            Query::Not(a) => 1 + a.depth(),
            Query::And(a, b) | Query::Or(a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    /// Builds a validated term, as the parser does for `field:raw`.
    pub fn term(field: Field, raw: &str) -> Result<Query, String> {
        let value = match field {
            Field::Py => parse_years(raw).ok_or_else(|| format!("bad year or range {raw:?}"))?,
            Field::An => Value::Id(raw.trim().parse().map_err(|_| format!("bad record id {raw:?}"))?),
            _ => {
                if raw.is_empty() {
                    return Err("empty value".into());
                }
                Value::Text(raw.to_owned())
            }
        };
        Ok(Query::Term { field, value })
    }
}

fn parse_years(raw: &str) -> Option<Value> {
    let raw = raw.trim();
    let year = |s: &str| -> Option<i32> {
        (s.len() == 4 && s.bytes().all(|b| b.is_ascii_digit())).then(|| s.parse().ok()).flatten()
    };
    match raw.split_once('-') {
        Some((a, b)) => {
            let (from, to) = (year(a)?, year(b)?);
            (from <= to).then_some(Value::Years { from, to })
        }
        None => year(raw).map(|y| Value::Years { from: y, to: y }),
    }
}

fn needs_quotes(s: &str) -> bool {
    s.is_empty() || s.chars().any(|c| c.is_whitespace() || "()!&|\":\\".contains(c))
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Query::Term { field, value } => {
                write!(f, "{}:", field.code())?;
                match value {
                    Value::Text(s) if needs_quotes(s) => {
                        write!(f, "\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
                    }
                    Value::Text(s) => f.write_str(s),
                    Value::Years { from, to } if from == to => write!(f, "{from}"),
                    Value::Years { from, to } => write!(f, "{from}-{to}"),
                    Value::Id(id) => write!(f, "{id}"),
                }
            }
            Query::And(a, b) => write!(f, "({a} & {b})"),
            Query::Or(a, b) => write!(f, "({a} | {b})"),
            Query::Not(a) => write!(f, "!{a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    Bang,
    Amp,
    Pipe,
    /// Optional field prefix (with its offset) and the value text.
    Term { field: Option<(String, usize)>, value: String },
}

fn is_word_char(c: char) -> bool {
    !c.is_whitespace() && !"()!&|\"".contains(c)
}

fn lex(q: &str) -> Result<Vec<(Tok, usize)>, QueryError> {
    let syntax = |offset, message: &str| QueryError::SyntaxError { offset, message: message.to_owned() };
    let mut out = Vec::new();
    let mut chars = q.char_indices().peekable();
    while let Some(&(at, c)) = chars.peek() {
        match c {
            c if c.is_whitespace() => {
                chars.next();
            }
            '(' | ')' | '!' | '&' | '|' => {
                chars.next();
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    '!' => Tok::Bang,
                    '&' => Tok::Amp,
                    _ => Tok::Pipe,
                };
                out.push((tok, at));
            }
            _ => {
                let mut word = String::new();
                while let Some(&(_, c)) = chars.peek() {
                    if !is_word_char(c) {
                        break;
                    }
                    word.push(c);
                    chars.next();
                }
                let (field, mut value) = match word.split_once(':') {
                    Some((f, v)) if !f.is_empty() && f.chars().all(|c| c.is_ascii_alphabetic()) => {
                        (Some((f.to_owned(), at)), v.to_owned())
                    }
                    _ => (None, word.clone()),
                };
                if value.is_empty() && matches!(chars.peek(), Some((_, '"'))) {
                    let (open, _) = chars.next().unwrap();
                    let mut closed = false;
                    while let Some((_, c)) = chars.next() {
                        match c {
                            '"' => {
                                closed = true;
                                break;
                            }
                            '\\' => match chars.next() {
                                Some((_, e)) => value.push(e),
                                None => break,
                            },
                            c => value.push(c),
                        }
                    }
                    if !closed {
                        return Err(syntax(open, "unterminated quoted phrase"));
                    }
                    if let Some(&(next, c)) = chars.peek() {
                        if is_word_char(c) {
                            return Err(syntax(next, "unexpected text after quoted phrase"));
                        }
                    }
                } else if value.is_empty() {
                    return Err(syntax(at + word.len(), "missing value"));
                }
                out.push((Tok::Term { field, value }, at));
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(_, o)| *o)
    }

    fn error(&self, message: &str) -> QueryError {
        QueryError::SyntaxError { offset: self.offset(), message: message.to_owned() }
    }

    fn or_expr(&mut self) -> Result<Query, QueryError> {
        let mut left = self.and_expr()?;
        while self.peek() == Some(&Tok::Pipe) {
            self.pos += 1;
            left = Query::or(left, self.and_expr()?);
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<Query, QueryError> {
        let mut left = self.unary()?;
        while self.peek() == Some(&Tok::Amp) {
            self.pos += 1;
            left = Query::and(left, self.unary()?);
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Query, QueryError> {
        if self.peek() == Some(&Tok::Bang) {
            self.pos += 1;
            return Ok(Query::not(self.unary()?));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Query, QueryError> {
        let Some((tok, at)) = self.toks.get(self.pos).cloned() else {
            return Err(self.error("unexpected end of query"));
        };
        match tok {
            Tok::LParen => {
                self.pos += 1;
                let inner = self.or_expr()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(self.error("expected `)`"));
                }
                self.pos += 1;
                Ok(inner)
            }
            Tok::Term { field, value } => {
                self.pos += 1;
                let field = match field {
                    None => Field::Ti,
                    Some((code, offset)) => {
                        Field::from_code(&code).ok_or(QueryError::UnknownField { field: code, offset })?
                    }
                };
                Query::term(field, &value).map_err(|message| QueryError::SyntaxError { offset: at, message })
            }
            _ => Err(self.error("expected a term or `(`")),
        }
    }
}

pub fn parse_query(q: &str) -> Result<Query, QueryError> {
    let toks = lex(q)?;
    if toks.is_empty() {
        return Err(QueryError::SyntaxError { offset: 0, message: "empty query".into() });
    }
    let mut p = Parser { toks, pos: 0, end: q.len() };
    let ast = p.or_expr()?;
    if p.pos != p.toks.len() {
        return Err(p.error("unexpected token"));
    }
    Ok(ast)
}

/// And-chain of structured parameters in field order (`au, ti, py, so, cc,
/// an`). Returns `Ok(None)` when no parameter is set.
pub fn structured_query(params: &BTreeMap<Field, String>) -> Result<Option<Query>, QueryError> {
    let mut acc: Option<Query> = None;
    for (&field, raw) in params {
        let term = Query::term(field, raw.trim())
            .map_err(|message| QueryError::SyntaxError { offset: 0, message: format!("{}: {message}", field.code()) })?;
        acc = Some(match acc {
            None => term,
            Some(prev) => Query::and(prev, term),
        });
    }
    Ok(acc)
}

/// Per-record search fields, analyzed once.
#[derive(Debug, Clone)]
struct RecordView {
    id: RecordId,
    title: BTreeSet<String>,
    surnames: BTreeSet<String>,
    serial: BTreeSet<String>,
    year: Option<i32>,
    msc: Vec<String>,
}

fn fold_name(s: &str) -> String {
    fold(s).split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Evaluates queries over a fixed corpus.
#[derive(Debug, Clone)]
pub struct SearchIndex {
    views: Vec<RecordView>,
}

impl SearchIndex {
    pub fn new(corpus: &Corpus) -> Self {
        let views = corpus
            .records()
            .map(|r| RecordView {
                id: r.id,
                title: normalize(&r.title).into_iter().collect(),
                surnames: r.authors.iter().map(|a| fold_name(&a.surname)).collect(),
                serial: r.serial.as_deref().map(normalize).unwrap_or_default().into_iter().collect(),
                year: r.year,
                msc: r.msc.clone(),
            })
            .collect();
        Self { views }
    }

    pub fn universe(&self) -> BTreeSet<RecordId> {
        self.views.iter().map(|v| v.id).collect()
    }

    fn term_ids(&self, field: Field, value: &Value) -> BTreeSet<RecordId> {
        let pred: Box<dyn Fn(&RecordView) -> bool> = match (field, value) {
            (Field::Py, Value::Years { from, to }) => {
                let (from, to) = (*from, *to);
                Box::new(move |v| v.year.is_some_and(|y| from <= y && y <= to))
            }
            (Field::An, Value::Id(id)) => {
                let id = *id;
                Box::new(move |v| v.id == id)
            }
            (Field::Au, Value::Text(s)) => {
                let name = fold_name(s.split(',').next().unwrap_or(""));
                Box::new(move |v| !name.is_empty() && v.surnames.contains(&name))
            }
            (Field::Ti, Value::Text(s)) => {
                let want = normalize(s);
                Box::new(move |v| !want.is_empty() && want.iter().all(|t| v.title.contains(t)))
            }
            (Field::So, Value::Text(s)) => {
                let want = normalize(s);
                Box::new(move |v| !want.is_empty() && want.iter().all(|t| v.serial.contains(t)))
            }
            (Field::Cc, Value::Text(s)) => {
                let prefix = s.trim().to_owned();
                Box::new(move |v| !prefix.is_empty() && v.msc.iter().any(|c| c.starts_with(&prefix)))
            }
            _ => Box::new(|_| false),
        };
        self.views.iter().filter(|v| pred(v)).map(|v| v.id).collect()
    }

    pub fn evaluate(&self, q: &Query) -> BTreeSet<RecordId> {
        match q {
            Query::Term { field, value } => self.term_ids(*field, value),
            Query::And(a, b) => self.evaluate(a).intersection(&self.evaluate(b)).copied().collect(),
            Query::Or(a, b) => self.evaluate(a).union(&self.evaluate(b)).copied().collect(),
            Query::Not(a) => self.universe().difference(&self.evaluate(a)).copied().collect(),
        }
    }
}

pub fn evaluate_query(q: &Query, corpus: &Corpus) -> BTreeSet<RecordId> {
    SearchIndex::new(corpus).evaluate(q)
}
