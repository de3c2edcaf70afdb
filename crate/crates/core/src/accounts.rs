//! AccountManager evidence.
//!
//! Two sources feed the same [`AccountRecord`] shape:
//!
//! * `accounts.db`, joined across its `accounts`, `authtokens` and `extras`
//!   tables. Note the link columns differ: `authtokens.accounts_id` but
//!   `extras.account_id`.
//! * A credential dump written to logcat by a patched services framework,
//!   one `CREDDUMP` line per account, authtoken and extra.
//!
//! Rows whose link points at no account are kept as [`Orphan`]s.
//!
//! The same logcat stream also carries `StaleDexCacheError` messages naming
//! system packages that need de-odexing; [`build_deodex_worklist`] counts
//! them.

use crate::artifact_parsers::{SqlValue, SqliteTable};
use crate::device_sim::{LogLine, DUMP_NULL, TAG_CREDDUMP};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

pub const ACCOUNTS_DB_PATH: &str = "system/users/0/accounts.db";
pub const STALE_DEX_MARKER: &str = "StaleDexCacheError";
pub const UNPARSED_PACKAGE: &str = "<unparsed>";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AccountsError {
    #[error("no \"accounts\" table")]
    MissingAccountsTable,
    #[error("table {table:?} lacks column {column:?}")]
    SchemaMismatch { table: String, column: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountRecord {
    pub id: i64,
    pub name: String,
    #[serde(rename = "type")]
    pub account_type: String,
    pub password: Option<String>,
    pub authtokens: Vec<(String, String)>,
    pub extras: Vec<(String, String)>,
}

/// A dependent row whose account link matched no account.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Orphan {
    pub table: String,
    /// The row's `_id`, when the table has one.
    pub row_id: Option<i64>,
    /// The link value as stored, rendered as text.
    pub account_ref: Option<String>,
    pub key: String,
    pub value: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountsExtraction {
    pub records: Vec<AccountRecord>,
    pub orphans: Vec<Orphan>,
}

fn column(t: &SqliteTable, name: &str) -> Result<usize, AccountsError> {
    t.column_index(name).ok_or_else(|| AccountsError::SchemaMismatch {
        table: t.name.clone(),
        column: name.to_string(),
    })
}

fn text(v: &SqlValue) -> String {
    v.render().unwrap_or_default()
}

fn link(v: &SqlValue) -> Option<i64> {
    match v {
        SqlValue::Integer(i) => Some(*i),
        SqlValue::Text(s) => s.trim().parse().ok(),
        _ => None,
    }
}

/// Joins the AccountManager tables. Every authtoken and extras row ends up
/// either on a record or in the orphan list.
pub fn extract_accounts(tables: &[SqliteTable]) -> Result<AccountsExtraction, AccountsError> {
    let find = |n: &str| tables.iter().find(|t| t.name.eq_ignore_ascii_case(n));
    let accounts = find("accounts").ok_or(AccountsError::MissingAccountsTable)?;
    let (id_c, name_c, type_c) = (column(accounts, "_id")?, column(accounts, "name")?, column(accounts, "type")?);
    let pw_c = accounts.column_index("password");

    let mut out = AccountsExtraction::default();
    let mut by_id: HashMap<i64, usize> = HashMap::new();
    for row in &accounts.rows {
        let id = link(&row[id_c]).ok_or_else(|| AccountsError::SchemaMismatch {
            table: "accounts".into(),
            column: "_id".into(),
        })?;
        by_id.entry(id).or_insert(out.records.len());
        out.records.push(AccountRecord {
            id,
            name: text(&row[name_c]),
            account_type: text(&row[type_c]),
            password: pw_c.and_then(|c| row[c].render()),
            authtokens: Vec::new(),
            extras: Vec::new(),
        });
    }

    let dependents: [(&str, &[&str], &str, &str, bool); 2] = [
        ("authtokens", &["accounts_id"], "type", "authtoken", true),
        ("extras", &["account_id", "accounts_id"], "key", "value", false),
    ];
    for (table, link_names, key_name, value_name, is_token) in dependents {
        let Some(t) = find(table) else { continue };
        let link_c = link_names
            .iter()
            .find_map(|n| t.column_index(n))
            .ok_or_else(|| AccountsError::SchemaMismatch { table: t.name.clone(), column: link_names[0].into() })?;
        let (key_c, value_c) = (column(t, key_name)?, column(t, value_name)?);
        let row_id_c = t.column_index("_id");
        for row in &t.rows {
            let pair = (text(&row[key_c]), text(&row[value_c]));
            match link(&row[link_c]).and_then(|id| by_id.get(&id)) {
                Some(&i) if is_token => out.records[i].authtokens.push(pair),
                Some(&i) => out.records[i].extras.push(pair),
                None => out.orphans.push(Orphan {
                    table: t.name.clone(),
                    row_id: row_id_c.and_then(|c| row[c].as_i64()),
                    account_ref: row[link_c].render(),
                    key: pair.0,
                    value: pair.1,
                }),
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalformedDumpLine {
    /// One-based position in the input.
    pub line: usize,
    pub text: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialDump {
    pub records: Vec<AccountRecord>,
    pub malformed: Vec<MalformedDumpLine>,
}

fn dump_unescape(s: &str) -> Option<String> {
    let b = s.as_bytes();
    let mut out = Vec::with_capacity(b.len());
    let mut i = 0;
    while i < b.len() {
        if b[i] == b'%' {
            let hex = s.get(i + 1..i + 3)?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(b[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

/// Splits `k1=v1 k2=v2 ...` and checks the keys are exactly `keys`.
fn fields<'a>(body: &'a str, keys: &[&str]) -> Result<Vec<&'a str>, String> {
    let parts: Vec<&str> = body.split(' ').collect();
    if parts.len() != keys.len() {
        return Err(format!("expected {} fields, found {}", keys.len(), parts.len()));
    }
    parts
        .iter()
        .zip(keys)
        .map(|(p, k)| {
            p.strip_prefix(k)
                .and_then(|r| r.strip_prefix('='))
                .ok_or_else(|| format!("expected field {k:?} in {p:?}"))
        })
        .collect()
}

fn decode(v: &str) -> Result<String, String> {
    dump_unescape(v).ok_or_else(|| format!("bad escape in {v:?}"))
}

/// Rebuilds account records from `CREDDUMP` logcat lines. Other lines are
/// ignored; broken dump lines are reported and skipped.
pub fn parse_credential_dump<'a>(lines: impl IntoIterator<Item = &'a str>) -> CredentialDump {
    let mut out = CredentialDump::default();
    for (n, raw) in lines.into_iter().enumerate() {
        let Some(line) = LogLine::parse(raw) else { continue };
        if line.tag != TAG_CREDDUMP {
            continue;
        }
        if let Err(reason) = apply_dump_line(&line.message, &mut out.records) {
            out.malformed.push(MalformedDumpLine { line: n + 1, text: raw.trim_end().to_string(), reason });
        }
    }
    out
}

fn apply_dump_line(msg: &str, records: &mut Vec<AccountRecord>) -> Result<(), String> {
    let (kind, body) = msg.split_once(' ').unwrap_or((msg, ""));
    match kind {
        "account" => {
            let f = fields(body, &["id", "name", "type", "password"])?;
            records.push(AccountRecord {
                id: f[0].parse().map_err(|_| format!("bad id {:?}", f[0]))?,
                name: decode(f[1])?,
                account_type: decode(f[2])?,
                password: if f[3] == DUMP_NULL { None } else { Some(decode(f[3])?) },
                authtokens: Vec::new(),
                extras: Vec::new(),
            });
        }
        "authtoken" | "extra" => {
            let keys: &[&str] = if kind == "extra" { &["key", "value"] } else { &["type", "token"] };
            let f = fields(body, keys)?;
            let pair = (decode(f[0])?, decode(f[1])?);
            let current = records.last_mut().ok_or_else(|| format!("{kind} line before any account line"))?;
            if kind == "extra" {
                current.extras.push(pair);
            } else {
                current.authtokens.push(pair);
            }
        }
        other => return Err(format!("unknown dump line kind {other:?}")),
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeodexWorkItem {
    pub package: String,
    /// Log timestamp of the first occurrence; `None` when the line carried none.
    pub first_seen: Option<u64>,
    pub occurrences: u64,
    pub unparsed: bool,
}

fn package_from(rest: &str) -> Option<String> {
    let rest = rest.trim_start_matches([':', ' ']);
    let token = rest
        .split_whitespace()
        .map(|t| t.trim_matches(|c: char| matches!(c, '(' | ')' | ',' | ';' | '"' | '\'' | ':')))
        .find(|t| !t.is_empty())?;
    let base = token.rsplit('/').next().unwrap_or(token);
    let stem = [".jar", ".apk", ".odex", ".dex"]
        .iter()
        .find_map(|ext| base.strip_suffix(ext))
        .unwrap_or(base);
    let stem = stem.split('@').next_back().unwrap_or(stem);
    let ok = !stem.is_empty() && stem.bytes().all(|b| b.is_ascii_alphanumeric() || b"._-".contains(&b));
    ok.then(|| stem.to_string())
}

/// Counts `StaleDexCacheError` packages, ordered by first sighting.
pub fn build_deodex_worklist<'a>(lines: impl IntoIterator<Item = &'a str>) -> Vec<DeodexWorkItem> {
    let mut items: Vec<DeodexWorkItem> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    for raw in lines {
        let Some(at) = raw.find(STALE_DEX_MARKER) else { continue };
        let ts = LogLine::parse(raw).map(|l| l.timestamp);
        let pkg = package_from(&raw[at + STALE_DEX_MARKER.len()..]);
        let unparsed = pkg.is_none();
        let pkg = pkg.unwrap_or_else(|| UNPARSED_PACKAGE.to_string());
        match index.get(&pkg) {
            Some(&i) => {
                let item = &mut items[i];
                item.occurrences += 1;
                if item.first_seen.is_none() {
                    item.first_seen = ts;
                }
            }
            None => {
                index.insert(pkg.clone(), items.len());
                items.push(DeodexWorkItem { package: pkg, first_seen: ts, occurrences: 1, unparsed });
            }
        }
    }
    // stable: ties and untimed lines keep log order
    items.sort_by_key(|i| i.first_seen.unwrap_or(u64::MAX));
    items
}

/// `deodex-worklist.txt`: one package per line.
pub fn render_worklist(items: &[DeodexWorkItem]) -> String {
    items.iter().map(|i| format!("{}\n", i.package)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum Provenance {
    Database { path: String },
    Logcat { lines: usize },
}

/// Contents of `accounts.json` (or `accounts-logcat.json`).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccountsReport {
    pub provenance: Provenance,
    pub records: Vec<AccountRecord>,
    pub orphans: Vec<Orphan>,
    #[serde(default)]
    pub malformed: Vec<MalformedDumpLine>,
}

impl AccountsReport {
    pub fn from_database(path: &str, x: AccountsExtraction) -> Self {
        AccountsReport {
            provenance: Provenance::Database { path: path.to_string() },
            records: x.records,
            orphans: x.orphans,
            malformed: Vec::new(),
        }
    }

    pub fn from_dump(lines: usize, d: CredentialDump) -> Self {
        AccountsReport {
            provenance: Provenance::Logcat { lines },
            records: d.records,
            orphans: Vec::new(),
            malformed: d.malformed,
        }
    }
}
