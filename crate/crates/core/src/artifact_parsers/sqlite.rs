//! Read-only decoder for the SQLite 3 file format.
//!
//! Only rowid tables are read. The reader walks `sqlite_master`, then each
//! table b-tree from its root page, and decodes every leaf cell's record.
//! Payloads that spill onto overflow pages, `WITHOUT ROWID` tables and
//! databases left in write-ahead-log mode are refused with an error rather
//! than read partially.

use serde::{Serialize, Serializer};
use std::collections::HashSet;
use thiserror::Error;

pub const SQLITE_MAGIC: &[u8; 16] = b"SQLite format 3\0";
const HEADER_LEN: usize = 100;
const MAX_DEPTH: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum SqliteError {
    #[error("bad database header: {0}")]
    BadHeader(String),
    #[error("unsupported text encoding {0} (only UTF-8 is read)")]
    UnsupportedEncoding(u32),
    #[error("row {rowid} of table {table:?} spills to overflow pages")]
    OverflowPageUnsupported { table: String, rowid: i64 },
    #[error("corrupt page {page}: {reason}")]
    CorruptPage { page: u32, reason: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
}

/// One decoded cell.
#[derive(Debug, Clone, PartialEq)]
pub enum SqlValue {
    Null,
    Integer(i64),
    Real(f64),
    Text(String),
    Blob(Vec<u8>),
}

impl SqlValue {
    pub fn as_i64(&self) -> Option<i64> {
        match self {
            SqlValue::Integer(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            SqlValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, SqlValue::Null)
    }

    /// Text as-is, blobs as lowercase hex, numbers in decimal.
    pub fn render(&self) -> Option<String> {
        match self {
            SqlValue::Null => None,
            SqlValue::Integer(v) => Some(v.to_string()),
            SqlValue::Real(v) => Some(v.to_string()),
            SqlValue::Text(s) => Some(s.clone()),
            SqlValue::Blob(b) => Some(hex::encode(b)),
        }
    }
}

impl Serialize for SqlValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        match self {
            SqlValue::Null => s.serialize_none(),
            SqlValue::Integer(v) => s.serialize_i64(*v),
            SqlValue::Real(v) if v.is_finite() => s.serialize_f64(*v),
            SqlValue::Real(v) => s.serialize_str(&v.to_string()),
            SqlValue::Text(t) => s.serialize_str(t),
            SqlValue::Blob(b) => {
                let mut m = s.serialize_map(Some(1))?;
                m.serialize_entry("blob", &hex::encode(b))?;
                m.end()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SqliteTable {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<SqlValue>>,
}

impl SqliteTable {
    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.eq_ignore_ascii_case(name))
    }
}

/// Parses every rowid table in `db`, in `sqlite_master` order.
pub fn sqlite_read(db: &[u8]) -> Result<Vec<SqliteTable>, SqliteError> {
    let file = DbFile::open(db)?;
    let master = file.scan_table(1, "sqlite_master")?;
    let mut tables = Vec::new();
    for (_, rec) in master {
        let field = |i: usize| rec.get(i).cloned().unwrap_or(SqlValue::Null);
        if field(0).as_text() != Some("table") {
            continue;
        }
        let name = field(1).as_text().unwrap_or_default().to_string();
        let root = field(3).as_i64().unwrap_or(0);
        let sql = field(4).as_text().unwrap_or_default().to_string();
        if root == 0 {
            // virtual table; its shadow tables are listed separately
            continue;
        }
        let schema = parse_create_table(&sql)
            .ok_or_else(|| SqliteError::Unsupported(format!("table {name:?}: cannot read {sql:?}")))?;
        if schema.without_rowid {
            return Err(SqliteError::Unsupported(format!("WITHOUT ROWID table {name:?}")));
        }
        let root = u32::try_from(root)
            .map_err(|_| SqliteError::CorruptPage { page: 1, reason: format!("root page {root}") })?;
        let mut rows = Vec::new();
        for (rowid, mut rec) in file.scan_table(root, &name)? {
            if rec.len() > schema.columns.len() {
                return Err(SqliteError::CorruptPage {
                    page: root,
                    reason: format!("row {rowid} of {name:?} has {} cells", rec.len()),
                });
            }
            rec.resize(schema.columns.len(), SqlValue::Null);
            if let Some(i) = schema.rowid_alias {
                rec[i] = SqlValue::Integer(rowid);
            }
            rows.push(rec);
        }
        tables.push(SqliteTable { name, columns: schema.columns, rows });
    }
    Ok(tables)
}

struct DbFile<'a> {
    bytes: &'a [u8],
    page_size: usize,
    usable: usize,
    pages: u32,
}

impl<'a> DbFile<'a> {
    fn open(bytes: &'a [u8]) -> Result<Self, SqliteError> {
        if bytes.len() < HEADER_LEN || &bytes[..16] != SQLITE_MAGIC {
            return Err(SqliteError::BadHeader("missing \"SQLite format 3\" magic".into()));
        }
        let raw = u16::from_be_bytes([bytes[16], bytes[17]]) as usize;
        let page_size = if raw == 1 { 65536 } else { raw };
        if !(512..=65536).contains(&page_size) || !page_size.is_power_of_two() {
            return Err(SqliteError::BadHeader(format!("page size {raw}")));
        }
        if bytes[18] == 2 || bytes[19] == 2 {
            return Err(SqliteError::Unsupported("database is in write-ahead-log mode".into()));
        }
        let reserved = bytes[20] as usize;
        let usable = page_size - reserved;
        if usable < 480 {
            return Err(SqliteError::BadHeader(format!("{reserved} reserved bytes per page")));
        }
        let encoding = u32::from_be_bytes(bytes[56..60].try_into().unwrap());
        if encoding != 0 && encoding != 1 {
            return Err(SqliteError::UnsupportedEncoding(encoding));
        }
        if !bytes.len().is_multiple_of(page_size) {
            return Err(SqliteError::BadHeader(format!(
                "file length {} is not a multiple of the page size {page_size}",
                bytes.len()
            )));
        }
        Ok(DbFile {
            bytes,
            page_size,
            usable,
            pages: (bytes.len() / page_size) as u32,
        })
    }

    fn page(&self, n: u32) -> Result<&'a [u8], SqliteError> {
        if n == 0 || n > self.pages {
            return Err(SqliteError::CorruptPage { page: n, reason: "page number out of range".into() });
        }
        let start = (n as usize - 1) * self.page_size;
        Ok(&self.bytes[start..start + self.page_size])
    }

    /// In-order walk of a table b-tree, yielding `(rowid, record)` pairs.
    fn scan_table(&self, root: u32, table: &str) -> Result<Vec<(i64, Vec<SqlValue>)>, SqliteError> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        self.walk(root, table, 0, &mut seen, &mut out)?;
        Ok(out)
    }

    fn walk(
        &self,
        n: u32,
        table: &str,
        depth: usize,
        seen: &mut HashSet<u32>,
        out: &mut Vec<(i64, Vec<SqlValue>)>,
    ) -> Result<(), SqliteError> {
        let corrupt = |reason: String| SqliteError::CorruptPage { page: n, reason };
        if depth > MAX_DEPTH || !seen.insert(n) {
            return Err(corrupt("b-tree loop".into()));
        }
        let page = self.page(n)?;
        let hdr = if n == 1 { HEADER_LEN } else { 0 };
        if page.len() < hdr + 8 {
            return Err(corrupt("short page".into()));
        }
        let kind = page[hdr];
        let cells = u16::from_be_bytes([page[hdr + 3], page[hdr + 4]]) as usize;
        let (ptr_base, right) = match kind {
            0x0D => (hdr + 8, None),
            0x05 => (hdr + 12, Some(be_u32(&page[hdr + 8..hdr + 12]))),
            0x02 | 0x0A => return Err(SqliteError::Unsupported(format!("index page {n} in table {table:?}"))),
            other => return Err(corrupt(format!("page type {other:#04x}"))),
        };
        if ptr_base + 2 * cells > self.usable {
            return Err(corrupt(format!("{cells} cells do not fit")));
        }
        for i in 0..cells {
            let at = ptr_base + 2 * i;
            let off = u16::from_be_bytes([page[at], page[at + 1]]) as usize;
            if off < ptr_base + 2 * cells || off >= self.usable {
                return Err(corrupt(format!("cell pointer {off}")));
            }
            let cell = &page[off..self.usable];
            if kind == 0x05 {
                if cell.len() < 4 {
                    return Err(corrupt("short interior cell".into()));
                }
                self.walk(be_u32(cell), table, depth + 1, seen, out)?;
            } else {
                let (len, a) = varint(cell).ok_or_else(|| corrupt("bad payload length".into()))?;
                let (rowid, b) = varint(&cell[a..]).ok_or_else(|| corrupt("bad rowid".into()))?;
                let rowid = rowid as i64;
                if len > (self.usable - 35) as u64 {
                    return Err(SqliteError::OverflowPageUnsupported { table: table.to_string(), rowid });
                }
                let start = a + b;
                let payload = cell
                    .get(start..start + len as usize)
                    .ok_or_else(|| corrupt(format!("row {rowid} runs past the page")))?;
                let rec = decode_record(payload).map_err(|e| corrupt(format!("row {rowid}: {e}")))?;
                out.push((rowid, rec));
            }
        }
        if let Some(r) = right {
            self.walk(r, table, depth + 1, seen, out)?;
        }
        Ok(())
    }
}

fn be_u32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

/// SQLite varint: big-endian, 7 bits per byte, the ninth byte contributes 8.
pub fn varint(b: &[u8]) -> Option<(u64, usize)> {
    let mut v: u64 = 0;
    for i in 0..9 {
        let byte = *b.get(i)?;
        if i == 8 {
            return Some(((v << 8) | byte as u64, 9));
        }
        v = (v << 7) | (byte & 0x7F) as u64;
        if byte & 0x80 == 0 {
            return Some((v, i + 1));
        }
    }
    unreachable!()
}

/// Decodes a record (header of serial types, then the body).
pub fn decode_record(payload: &[u8]) -> Result<Vec<SqlValue>, String> {
    let (hlen, mut pos) = varint(payload).ok_or("bad header length")?;
    let hlen = hlen as usize;
    if hlen > payload.len() || hlen < pos {
        return Err(format!("header length {hlen}"));
    }
    let mut types = Vec::new();
    while pos < hlen {
        let (t, n) = varint(&payload[pos..hlen]).ok_or("bad serial type")?;
        types.push(t);
        pos += n;
    }
    let mut body = &payload[hlen..];
    let mut out = Vec::with_capacity(types.len());
    for t in types {
        let width = match t {
            0 | 8 | 9 => 0,
            1..=4 => t as usize,
            5 => 6,
            6 | 7 => 8,
            10 | 11 => return Err(format!("reserved serial type {t}")),
            n => ((n - 12) / 2) as usize,
        };
        if body.len() < width {
            return Err("record body truncated".into());
        }
        let (data, rest) = body.split_at(width);
        body = rest;
        out.push(match t {
            0 => SqlValue::Null,
            8 => SqlValue::Integer(0),
            9 => SqlValue::Integer(1),
            1..=6 => {
                let mut v: i64 = if data[0] & 0x80 != 0 { -1 } else { 0 };
                for &b in data {
                    v = (v << 8) | b as i64;
                }
                SqlValue::Integer(v)
            }
            7 => SqlValue::Real(f64::from_be_bytes(data.try_into().unwrap())),
            n if n % 2 == 0 => SqlValue::Blob(data.to_vec()),
            _ => SqlValue::Text(String::from_utf8_lossy(data).into_owned()),
        });
    }
    Ok(out)
}

#[derive(Debug, PartialEq)]
struct TableSchema {
    columns: Vec<String>,
    rowid_alias: Option<usize>,
    without_rowid: bool,
}

const CONSTRAINT_WORDS: &[&str] = &["CONSTRAINT", "PRIMARY", "UNIQUE", "CHECK", "FOREIGN"];

fn parse_create_table(sql: &str) -> Option<TableSchema> {
    let toks = tokenize(sql);
    let open = toks.iter().position(|t| t.text == "(")?;
    let mut depth = 0usize;
    let mut defs: Vec<Vec<&Token>> = vec![Vec::new()];
    let mut close = None;
    for (i, t) in toks.iter().enumerate().skip(open + 1) {
        match t.text.as_str() {
            "(" => depth += 1,
            ")" if depth == 0 => {
                close = Some(i);
                break;
            }
            ")" => depth -= 1,
            "," if depth == 0 => {
                defs.push(Vec::new());
                continue;
            }
            _ => {}
        }
        defs.last_mut().unwrap().push(t);
    }
    let close = close?;
    let tail: Vec<String> = toks[close + 1..].iter().map(|t| t.text.to_ascii_uppercase()).collect();
    let without_rowid = tail.windows(2).any(|w| w[0] == "WITHOUT" && w[1] == "ROWID");

    let mut columns = Vec::new();
    let mut alias = None;
    let mut table_pk: Option<Vec<String>> = None;
    let mut types = Vec::new();
    for def in defs.iter().filter(|d| !d.is_empty()) {
        let head = def[0];
        let upper = head.text.to_ascii_uppercase();
        if !head.quoted && CONSTRAINT_WORDS.contains(&upper.as_str()) {
            if let Some(p) = def.windows(2).position(|w| upper_eq(w[0], "PRIMARY") && upper_eq(w[1], "KEY")) {
                let names: Vec<String> = def[p + 2..]
                    .iter()
                    .filter(|t| t.quoted || !matches!(t.text.as_str(), "(" | ")" | ","))
                    .take_while(|t| !upper_eq(t, "ON"))
                    .filter(|t| t.quoted || !matches!(t.text.to_ascii_uppercase().as_str(), "ASC" | "DESC" | "COLLATE"))
                    .map(|t| t.text.clone())
                    .collect();
                table_pk = Some(names);
            }
            continue;
        }
        let mut decl = Vec::new();
        for t in &def[1..] {
            if t.quoted || t.text == "(" {
                break;
            }
            let u = t.text.to_ascii_uppercase();
            if CONSTRAINT_WORDS.contains(&u.as_str()) || matches!(u.as_str(), "NOT" | "NULL" | "DEFAULT" | "COLLATE" | "REFERENCES" | "GENERATED" | "AS") {
                break;
            }
            decl.push(u);
        }
        let is_integer = decl.len() == 1 && decl[0] == "INTEGER";
        let pk = def.windows(2).position(|w| upper_eq(w[0], "PRIMARY") && upper_eq(w[1], "KEY"));
        if let Some(p) = pk {
            let desc = def.get(p + 2).is_some_and(|t| upper_eq(t, "DESC"));
            if is_integer && !desc {
                alias = Some(columns.len());
            }
        }
        types.push(is_integer);
        columns.push(head.text.clone());
    }
    if let Some(pk) = table_pk {
        if let [only] = pk.as_slice() {
            if let Some(i) = columns.iter().position(|c| c.eq_ignore_ascii_case(only)) {
                if types[i] {
                    alias = Some(i);
                }
            }
        }
    }
    if columns.is_empty() {
        return None;
    }
    Some(TableSchema { columns, rowid_alias: alias, without_rowid })
}

fn upper_eq(t: &Token, word: &str) -> bool {
    !t.quoted && t.text.eq_ignore_ascii_case(word)
}

#[derive(Debug)]
struct Token {
    text: String,
    quoted: bool,
}

fn tokenize(sql: &str) -> Vec<Token> {
    let chars: Vec<char> = sql.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c == '/' && chars.get(i + 1) == Some(&'*') {
            i += 2;
            while i < chars.len() && !(chars[i] == '*' && chars.get(i + 1) == Some(&'/')) {
                i += 1;
            }
            i += 2;
        } else if matches!(c, '"' | '`' | '\'' | '[') {
            let close = if c == '[' { ']' } else { c };
            let mut text = String::new();
            i += 1;
            while i < chars.len() {
                if chars[i] == close {
                    if close != ']' && chars.get(i + 1) == Some(&close) {
                        text.push(close);
                        i += 2;
                        continue;
                    }
                    break;
                }
                text.push(chars[i]);
                i += 1;
            }
            i += 1;
            out.push(Token { text, quoted: true });
        } else if c.is_alphanumeric() || c == '_' || c == '$' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_' || chars[i] == '$' || chars[i] == '.') {
                i += 1;
            }
            out.push(Token { text: chars[start..i].iter().collect(), quoted: false });
        } else {
            out.push(Token { text: c.to_string(), quoted: false });
            i += 1;
        }
    }
    out
}
