//! A small OQL dialect.
//!
//! ```text
//! query   := SELECT path FROM class alias [WHERE expr] [;]
//! class   := dotted.name | dotted.prefix.*        (also char[], Foo[] ...)
//! path    := alias { . field }
//! expr    := term { OR term }
//! term    := factor { AND factor }
//! factor  := NOT factor | ( expr ) | contains(operand, "text")
//!          | startsWith(operand, "text") | operand INSTANCEOF class
//!          | operand (= | != | < | > | <= | >=) operand
//! operand := path | "string" | 'string' | number | true | false | null
//! ```
//!
//! Keywords and function names are case-insensitive. An exact class name
//! also matches its subclasses; a `*` pattern matches by name prefix only.
//! Any comparison with a null side is false, including `!=`. Rows come back
//! ordered by object id.

use super::graph::{FieldValue, HeapGraph, ObjectId, ObjectRef, NULL_ID};
use serde::Serialize;
use std::collections::BTreeSet;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OqlError {
    #[error("parse error at {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("no class matching the query declares field {0:?}")]
    UnknownField(String),
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClassPattern {
    Exact(String),
    Prefix(String),
}

impl ClassPattern {
    fn parse(s: &str) -> Self {
        match s.strip_suffix('*') {
            Some(p) => ClassPattern::Prefix(p.to_string()),
            None => ClassPattern::Exact(s.to_string()),
        }
    }

    pub fn matches(&self, graph: &HeapGraph, id: ObjectId) -> bool {
        match self {
            ClassPattern::Exact(name) => graph.is_instance_of(id, name),
            ClassPattern::Prefix(p) => graph.class_of(id).is_some_and(|c| c.starts_with(p.as_str())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path {
    pub fields: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Operand {
    Path(Path),
    Str(String),
    Int(i64),
    Float(f64),
    Bool(bool),
    Null,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Gt,
    Le,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Or(Box<Expr>, Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    Cmp(Operand, CmpOp, Operand),
    Contains(Operand, String),
    StartsWith(Operand, String),
    InstanceOf(Operand, String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OqlQuery {
    pub select: Path,
    pub class: ClassPattern,
    pub alias: String,
    pub filter: Option<Expr>,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Str(String),
    Int(i64),
    Float(f64),
    Sym(&'static str),
}

fn lex(q: &str) -> Result<Vec<(usize, Tok)>, OqlError> {
    let b = q.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |position: usize, message: &str| OqlError::Parse { position, message: message.to_string() };
    while i < b.len() {
        let c = b[i];
        let start = i;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'"' || c == b'\'' {
            let mut s = Vec::new();
            i += 1;
            loop {
                match b.get(i) {
                    None => return Err(err(start, "unterminated string")),
                    Some(&x) if x == c => break,
                    Some(b'\\') => {
                        let e = *b.get(i + 1).ok_or_else(|| err(i, "dangling escape"))?;
                        s.push(match e {
                            b'n' => b'\n',
                            b't' => b'\t',
                            other => other,
                        });
                        i += 2;
                    }
                    Some(&x) => {
                        s.push(x);
                        i += 1;
                    }
                }
            }
            i += 1;
            out.push((start, Tok::Str(String::from_utf8_lossy(&s).into_owned())));
        } else if c.is_ascii_digit() || (c == b'-' && b.get(i + 1).is_some_and(u8::is_ascii_digit)) {
            i += 1;
            while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.' || b[i] == b'e' || b[i] == b'E') {
                i += 1;
            }
            let text = &q[start..i];
            let tok = match text.parse::<i64>() {
                Ok(v) => Tok::Int(v),
                Err(_) => Tok::Float(text.parse().map_err(|_| err(start, "bad number"))?),
            };
            out.push((start, tok));
        } else if c.is_ascii_alphabetic() || matches!(c, b'_' | b'$' | b'*') {
            while i < b.len() {
                let x = b[i];
                if x.is_ascii_alphanumeric() || matches!(x, b'_' | b'$' | b'.' | b'*') {
                    i += 1;
                } else if x == b'[' && b.get(i + 1) == Some(&b']') {
                    i += 2;
                } else {
                    break;
                }
            }
            out.push((start, Tok::Word(q[start..i].to_string())));
        } else {
            let two = q.get(i..i + 2);
            let sym = match (two, c) {
                (Some("!="), _) => "!=",
                (Some("<="), _) => "<=",
                (Some(">="), _) => ">=",
                (Some("<>"), _) => "!=",
                (_, b'=') => "=",
                (_, b'<') => "<",
                (_, b'>') => ">",
                (_, b'(') => "(",
                (_, b')') => ")",
                (_, b',') => ",",
                (_, b';') => ";",
                _ => return Err(err(start, &format!("unexpected character {:?}", c as char))),
            };
            i += if sym.len() == 2 || two == Some("<>") { 2 } else { 1 };
            out.push((start, Tok::Sym(sym)));
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    alias: String,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn at(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn fail<T>(&self, message: impl Into<String>) -> Result<T, OqlError> {
        Err(OqlError::Parse { position: self.at(), message: message.into() })
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Word(w)) if w.eq_ignore_ascii_case(kw))
    }

    fn keyword(&mut self, kw: &str) -> Result<(), OqlError> {
        if self.is_kw(kw) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(format!("expected {kw}"))
        }
    }

    fn sym(&mut self, s: &str) -> Result<(), OqlError> {
        if self.peek() == Some(&Tok::Sym(match s {
            "(" => "(",
            ")" => ")",
            "," => ",",
            _ => unreachable!(),
        })) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(format!("expected {s:?}"))
        }
    }

    fn word(&mut self, what: &str) -> Result<String, OqlError> {
        match self.peek() {
            Some(Tok::Word(w)) => {
                let w = w.clone();
                self.pos += 1;
                Ok(w)
            }
            _ => self.fail(format!("expected {what}")),
        }
    }

    fn string(&mut self) -> Result<String, OqlError> {
        match self.peek() {
            Some(Tok::Str(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => self.fail("expected a string literal"),
        }
    }

    fn path_of(&self, word: &str, at: usize) -> Result<Path, OqlError> {
        let mut parts = word.split('.');
        let head = parts.next().unwrap_or_default();
        if head != self.alias {
            return Err(OqlError::Parse { position: at, message: format!("unknown name {head:?}; expected alias {:?}", self.alias) });
        }
        let fields: Vec<String> = parts.map(str::to_string).collect();
        if fields.iter().any(|f| f.is_empty() || f.contains(['*', '['])) {
            return Err(OqlError::Parse { position: at, message: format!("bad field path {word:?}") });
        }
        Ok(Path { fields })
    }

    fn expr(&mut self) -> Result<Expr, OqlError> {
        let mut lhs = self.term()?;
        while self.is_kw("OR") {
            self.pos += 1;
            lhs = Expr::Or(Box::new(lhs), Box::new(self.term()?));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, OqlError> {
        let mut lhs = self.factor()?;
        while self.is_kw("AND") {
            self.pos += 1;
            lhs = Expr::And(Box::new(lhs), Box::new(self.factor()?));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, OqlError> {
        if self.is_kw("NOT") {
            self.pos += 1;
            return Ok(Expr::Not(Box::new(self.factor()?)));
        }
        if self.peek() == Some(&Tok::Sym("(")) {
            self.pos += 1;
            let e = self.expr()?;
            self.sym(")")?;
            return Ok(e);
        }
        for (name, is_contains) in [("contains", true), ("startsWith", false)] {
            let next_is_paren = matches!(self.toks.get(self.pos + 1), Some((_, Tok::Sym("("))));
            if self.is_kw(name) && next_is_paren {
                self.pos += 1;
                self.sym("(")?;
                let x = self.operand()?;
                self.sym(",")?;
                let lit = self.string()?;
                self.sym(")")?;
                return Ok(if is_contains { Expr::Contains(x, lit) } else { Expr::StartsWith(x, lit) });
            }
        }
        let lhs = self.operand()?;
        if self.is_kw("INSTANCEOF") {
            self.pos += 1;
            let class = self.word("a class name")?;
            return Ok(Expr::InstanceOf(lhs, class));
        }
        let op = match self.peek() {
            Some(Tok::Sym("=")) => CmpOp::Eq,
            Some(Tok::Sym("!=")) => CmpOp::Ne,
            Some(Tok::Sym("<")) => CmpOp::Lt,
            Some(Tok::Sym(">")) => CmpOp::Gt,
            Some(Tok::Sym("<=")) => CmpOp::Le,
            Some(Tok::Sym(">=")) => CmpOp::Ge,
            _ => return self.fail("expected a comparison operator"),
        };
        self.pos += 1;
        let rhs = self.operand()?;
        Ok(Expr::Cmp(lhs, op, rhs))
    }

    fn operand(&mut self) -> Result<Operand, OqlError> {
        let at = self.at();
        let op = match self.peek().cloned() {
            Some(Tok::Str(s)) => Operand::Str(s),
            Some(Tok::Int(v)) => Operand::Int(v),
            Some(Tok::Float(v)) => Operand::Float(v),
            Some(Tok::Word(w)) if w.eq_ignore_ascii_case("null") => Operand::Null,
            Some(Tok::Word(w)) if w.eq_ignore_ascii_case("true") => Operand::Bool(true),
            Some(Tok::Word(w)) if w.eq_ignore_ascii_case("false") => Operand::Bool(false),
            Some(Tok::Word(w)) => Operand::Path(self.path_of(&w, at)?),
            _ => return self.fail("expected a value"),
        };
        self.pos += 1;
        Ok(op)
    }
}

pub fn parse_oql(query: &str) -> Result<OqlQuery, OqlError> {
    let toks = lex(query)?;
    let mut p = Parser { toks, pos: 0, end: query.len(), alias: String::new() };
    p.keyword("SELECT")?;
    let sel_at = p.at();
    let sel = p.word("a selection")?;
    p.keyword("FROM")?;
    let class = p.word("a class name or pattern")?;
    let alias_at = p.at();
    let alias = p.word("an alias")?;
    if alias.contains(['.', '*', '[']) || ["WHERE", "SELECT", "FROM"].iter().any(|k| alias.eq_ignore_ascii_case(k)) {
        return Err(OqlError::Parse { position: alias_at, message: format!("bad alias {alias:?}") });
    }
    if class.contains('*') && !class.ends_with('*') || class.matches('*').count() > 1 {
        return Err(OqlError::Parse { position: alias_at, message: "'*' may only end a class pattern".into() });
    }
    p.alias = alias.clone();
    let select = p.path_of(&sel, sel_at)?;
    let filter = if p.is_kw("WHERE") {
        p.pos += 1;
        Some(p.expr()?)
    } else {
        None
    };
    if p.peek() == Some(&Tok::Sym(";")) {
        p.pos += 1;
    }
    if p.peek().is_some() {
        return p.fail("unexpected trailing input");
    }
    Ok(OqlQuery { select, class: ClassPattern::parse(&class), alias, filter })
}

/// A runtime value.
#[derive(Debug, Clone, PartialEq)]
pub enum Val {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Obj(ObjectId),
}

fn from_field(v: FieldValue) -> Val {
    match v {
        FieldValue::Object(NULL_ID) => Val::Null,
        FieldValue::Object(id) => Val::Obj(id),
        FieldValue::Boolean(b) => Val::Bool(b),
        FieldValue::Char(c) => Val::Str(String::from_utf16_lossy(&[c])),
        FieldValue::Float(f) => Val::Float(f as f64),
        FieldValue::Double(d) => Val::Float(d),
        other => Val::Int(other.as_i64().unwrap_or(0)),
    }
}

fn eval_path(g: &HeapGraph, id: ObjectId, path: &Path) -> Val {
    let mut cur = Val::Obj(id);
    for f in &path.fields {
        cur = match cur {
            Val::Obj(o) => match g.object(o) {
                Some(ObjectRef::Instance(_)) => g.field(o, f).map_or(Val::Null, from_field),
                Some(ObjectRef::ObjArray(a)) if f == "length" => Val::Int(a.elements.len() as i64),
                Some(ObjectRef::PrimArray(a)) if f == "length" => Val::Int(a.count as i64),
                _ => Val::Null,
            },
            _ => Val::Null,
        };
    }
    cur
}

fn operand(g: &HeapGraph, id: ObjectId, o: &Operand) -> Val {
    match o {
        Operand::Path(p) => eval_path(g, id, p),
        Operand::Str(s) => Val::Str(s.clone()),
        Operand::Int(v) => Val::Int(*v),
        Operand::Float(v) => Val::Float(*v),
        Operand::Bool(b) => Val::Bool(*b),
        Operand::Null => Val::Null,
    }
}

fn text_of(g: &HeapGraph, v: &Val) -> Option<String> {
    match v {
        Val::Str(s) => Some(s.clone()),
        Val::Obj(o) => g.string_value(*o),
        _ => None,
    }
}

fn describe(v: &Val) -> &'static str {
    match v {
        Val::Null => "null",
        Val::Bool(_) => "boolean",
        Val::Int(_) => "integer",
        Val::Float(_) => "number",
        Val::Str(_) => "string",
        Val::Obj(_) => "object",
    }
}

fn compare(g: &HeapGraph, a: &Val, op: CmpOp, b: &Val) -> Result<bool, OqlError> {
    use std::cmp::Ordering;
    let ord: Option<Ordering> = match (a, b) {
        (Val::Null, _) | (_, Val::Null) => return Ok(false),
        (Val::Int(x), Val::Int(y)) => Some(x.cmp(y)),
        (Val::Int(_) | Val::Float(_), Val::Int(_) | Val::Float(_)) => {
            let f = |v: &Val| match v {
                Val::Int(i) => *i as f64,
                Val::Float(f) => *f,
                _ => unreachable!(),
            };
            f(a).partial_cmp(&f(b))
        }
        (Val::Bool(x), Val::Bool(y)) => {
            return match op {
                CmpOp::Eq => Ok(x == y),
                CmpOp::Ne => Ok(x != y),
                _ => Err(OqlError::TypeMismatch("booleans are not ordered".into())),
            }
        }
        (Val::Str(_) | Val::Obj(_), Val::Str(_) | Val::Obj(_)) => match (text_of(g, a), text_of(g, b)) {
            (Some(x), Some(y)) => Some(x.cmp(&y)),
            _ => match (a, b) {
                (Val::Obj(x), Val::Obj(y)) => {
                    return match op {
                        CmpOp::Eq => Ok(x == y),
                        CmpOp::Ne => Ok(x != y),
                        _ => Err(OqlError::TypeMismatch("objects are not ordered".into())),
                    }
                }
                _ => return Err(OqlError::TypeMismatch("object compared with a string".into())),
            },
        },
        _ => return Err(OqlError::TypeMismatch(format!("{} compared with {}", describe(a), describe(b)))),
    };
    let Some(ord) = ord else { return Ok(false) };
    Ok(match op {
        CmpOp::Eq => ord == Ordering::Equal,
        CmpOp::Ne => ord != Ordering::Equal,
        CmpOp::Lt => ord == Ordering::Less,
        CmpOp::Gt => ord == Ordering::Greater,
        CmpOp::Le => ord != Ordering::Greater,
        CmpOp::Ge => ord != Ordering::Less,
    })
}

fn eval(g: &HeapGraph, id: ObjectId, e: &Expr) -> Result<bool, OqlError> {
    Ok(match e {
        Expr::Or(a, b) => eval(g, id, a)? || eval(g, id, b)?,
        Expr::And(a, b) => eval(g, id, a)? && eval(g, id, b)?,
        Expr::Not(a) => !eval(g, id, a)?,
        Expr::Cmp(a, op, b) => compare(g, &operand(g, id, a), *op, &operand(g, id, b))?,
        Expr::Contains(x, lit) | Expr::StartsWith(x, lit) => {
            let v = operand(g, id, x);
            if v == Val::Null {
                return Ok(false);
            }
            let text = text_of(g, &v)
                .ok_or_else(|| OqlError::TypeMismatch(format!("{} is not text", describe(&v))))?;
            match e {
                Expr::Contains(..) => text.contains(lit.as_str()),
                _ => text.starts_with(lit.as_str()),
            }
        }
        Expr::InstanceOf(x, class) => match operand(g, id, x) {
            Val::Obj(o) => ClassPattern::parse(class).matches(g, o),
            _ => false,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OqlRow {
    pub id: ObjectId,
    pub class: String,
    pub value: serde_json::Value,
}

fn render(g: &HeapGraph, v: &Val) -> serde_json::Value {
    use serde_json::json;
    match v {
        Val::Null => serde_json::Value::Null,
        Val::Bool(b) => json!(b),
        Val::Int(i) => json!(i),
        Val::Float(f) => serde_json::Number::from_f64(*f).map_or_else(|| json!(f.to_string()), serde_json::Value::Number),
        Val::Str(s) => json!(s),
        Val::Obj(o) => {
            let mut m = serde_json::Map::new();
            m.insert("id".into(), json!(o));
            m.insert("class".into(), json!(g.class_of(*o).or_else(|| g.class_name(*o).map(|c| format!("class {c}")))));
            if let Some(t) = g.string_value(*o) {
                m.insert("text".into(), json!(t));
            }
            serde_json::Value::Object(m)
        }
    }
}

fn first_fields(e: &Expr, out: &mut Vec<String>) {
    let mut op = |o: &Operand| {
        if let Operand::Path(p) = o {
            out.extend(p.fields.first().cloned());
        }
    };
    match e {
        Expr::Or(a, b) | Expr::And(a, b) => {
            first_fields(a, out);
            first_fields(b, out);
        }
        Expr::Not(a) => first_fields(a, out),
        Expr::Cmp(a, _, b) => {
            op(a);
            op(b);
        }
        Expr::Contains(x, _) | Expr::StartsWith(x, _) | Expr::InstanceOf(x, _) => op(x),
    }
}

/// Runs a parsed query over every object in the graph.
pub fn oql_run(graph: &HeapGraph, q: &OqlQuery) -> Result<Vec<OqlRow>, OqlError> {
    let candidates: Vec<ObjectId> = graph.object_ids().into_iter().filter(|&id| q.class.matches(graph, id)).collect();

    // fields named right after the alias must exist on some candidate
    let mut available = BTreeSet::new();
    for &id in &candidates {
        match graph.object(id) {
            Some(ObjectRef::Instance(i)) => available.extend(i.fields.iter().map(|(n, _)| n.as_str())),
            _ => {
                available.insert("length");
            }
        }
    }
    let mut used = Vec::new();
    used.extend(q.select.fields.first().cloned());
    if let Some(f) = &q.filter {
        first_fields(f, &mut used);
    }
    if !candidates.is_empty() {
        if let Some(missing) = used.iter().find(|f| !available.contains(f.as_str())) {
            return Err(OqlError::UnknownField(missing.clone()));
        }
    }

    let mut rows = Vec::new();
    for id in candidates {
        if let Some(f) = &q.filter {
            if !eval(graph, id, f)? {
                continue;
            }
        }
        rows.push(OqlRow {
            id,
            class: graph.class_of(id).unwrap_or_default(),
            value: render(graph, &eval_path(graph, id, &q.select)),
        });
    }
    Ok(rows)
}

/// Parses and runs `query`.
pub fn oql_execute(graph: &HeapGraph, query: &str) -> Result<Vec<OqlRow>, OqlError> {
    oql_run(graph, &parse_oql(query)?)
}

#[cfg(test)]
mod tests {
    use super::super::hprof::{parse_hprof, HeapBuilder};
    use super::super::graph::BasicType;
    use super::*;

    fn fixture() -> (HeapGraph, Vec<ObjectId>) {
        let mut b = HeapBuilder::default();
        let words = ["authentication-token", "hello", "user authentication", "Bearer abc", "token"];
        let ids: Vec<ObjectId> = words.iter().map(|w| b.string(w)).collect();
        let client = b.class("org.apache.http.client.HttpClient", None, &[("timeout", BasicType::Int), ("host", BasicType::Object)]);
        let h = b.string("api.example.com");
        let c = b.instance(client, &[("timeout", FieldValue::Int(30)), ("host", FieldValue::Object(h))]);
        for &i in &ids {
            b.root(i);
        }
        b.root(c);
        (parse_hprof(&b.build()).unwrap(), ids)
    }

    #[test]
    fn contains_authentication() {
        let (g, ids) = fixture();
        let rows = oql_execute(&g, r#"SELECT s FROM java.lang.String s WHERE contains(s, "authentication")"#).unwrap();
        assert_eq!(rows.iter().map(|r| r.id).collect::<Vec<_>>(), vec![ids[0], ids[2]]);
        assert_eq!(rows[0].value["text"], "authentication-token");
    }

    #[test]
    fn empty_needle_and_prefix_pattern() {
        let (g, _) = fixture();
        assert_eq!(oql_execute(&g, r#"select s from java.lang.String s where contains(s, "")"#).unwrap().len(), 6);
        let rows = oql_execute(&g, "SELECT x FROM org.apache.http.client.* x").unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].class, "org.apache.http.client.HttpClient");
        let host = oql_execute(&g, "SELECT x.host FROM org.apache.http.client.* x WHERE x.timeout > 10").unwrap();
        assert_eq!(host[0].value["text"], "api.example.com");
    }

    #[test]
    fn null_and_types() {
        let (g, _) = fixture();
        assert!(oql_execute(&g, "SELECT s FROM java.lang.String s WHERE s.value = null").unwrap().is_empty());
        assert!(oql_execute(&g, "SELECT s FROM java.lang.String s WHERE s.value != null").unwrap().is_empty());
        assert_eq!(oql_execute(&g, "SELECT s FROM java.lang.String s WHERE NOT s.value = null").unwrap().len(), 6);
        assert!(matches!(
            oql_execute(&g, "SELECT x FROM org.apache.http.client.* x WHERE x.timeout = 'a'"),
            Err(OqlError::TypeMismatch(_))
        ));
        assert_eq!(
            oql_execute(&g, "SELECT x FROM org.apache.http.client.* x WHERE x.nope = 1"),
            Err(OqlError::UnknownField("nope".into()))
        );
        let arrays = oql_execute(&g, "SELECT a.length FROM char[] a WHERE a.length > 15").unwrap();
        assert_eq!(arrays.len(), 2);
    }

    #[test]
    fn parse_errors_carry_positions() {
        for (q, pos) in [
            ("SELEKT s FROM X s", 0),
            ("SELECT s FROM X s WHERE", 23),
            ("SELECT t FROM X s", 7),
            ("SELECT s FROM X s WHERE s.a = ", 30),
            ("SELECT s FROM X s WHERE contains(s, 1)", 36),
            ("SELECT s FROM X s trailing", 18),
        ] {
            match parse_oql(q) {
                Err(OqlError::Parse { position, .. }) => assert_eq!(position, pos, "{q}"),
                other => panic!("{q}: {other:?}"),
            }
        }
    }

    #[test]
    fn precedence() {
        let q = parse_oql("SELECT s FROM X s WHERE NOT s.a = 1 OR s.b = 2 AND s.c = 3").unwrap();
        assert!(matches!(q.filter, Some(Expr::Or(ref l, ref r)) if matches!(**l, Expr::Not(_)) && matches!(**r, Expr::And(..))));
    }
}
