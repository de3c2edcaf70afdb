//! Reference dumps written next to each fixture database.

use caseforge::artifact_parsers::{sqlite_read, SqlValue, SqliteError, SqliteTable};
use serde_json::Value;
use std::collections::BTreeMap;
use std::path::PathBuf;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/sqlite").join(name)
}

pub fn read_db(name: &str) -> Result<Vec<SqliteTable>, SqliteError> {
    sqlite_read(&std::fs::read(fixture(name)).unwrap())
}

pub fn key(v: &SqlValue) -> String {
    match v {
        SqlValue::Null => "null".into(),
        SqlValue::Integer(i) => format!("int:{i}"),
        SqlValue::Real(f) => format!("real:{:?}", f),
        SqlValue::Text(s) => format!("text:{s:?}"),
        SqlValue::Blob(b) => format!("blob:{}", hex::encode(b)),
    }
}

pub fn dump_key(v: &Value) -> String {
    let Some(obj) = v.as_object() else { return "null".into() };
    let (kind, inner) = obj.iter().next().unwrap();
    match kind.as_str() {
        "int" => format!("int:{}", inner.as_i64().unwrap()),
        "real" => format!("real:{:?}", inner.as_f64().unwrap()),
        "text" => format!("text:{:?}", inner.as_str().unwrap()),
        "blob" => format!("blob:{}", inner.as_str().unwrap()),
        other => panic!("unknown cell kind {other}"),
    }
}

/// Table name -> (columns, sorted row keys).
pub type Multisets = BTreeMap<String, (Vec<String>, Vec<Vec<String>>)>;

pub fn ours(tables: &[SqliteTable]) -> Multisets {
    tables
        .iter()
        .map(|t| {
            let mut rows: Vec<Vec<String>> = t.rows.iter().map(|r| r.iter().map(key).collect()).collect();
            rows.sort();
            (t.name.clone(), (t.columns.clone(), rows))
        })
        .collect()
}

pub fn reference(name: &str) -> Multisets {
    let text = std::fs::read_to_string(fixture(&name.replace(".db", ".dump.json"))).unwrap();
    let dump: Value = serde_json::from_str(&text).unwrap();
    dump["tables"]
        .as_object()
        .unwrap()
        .iter()
        .map(|(t, body)| {
            let cols = body["columns"].as_array().unwrap().iter().map(|c| c.as_str().unwrap().to_string()).collect();
            let mut rows: Vec<Vec<String>> = body["rows"]
                .as_array()
                .unwrap()
                .iter()
                .map(|r| r.as_array().unwrap().iter().map(dump_key).collect())
                .collect();
            rows.sort();
            (t.clone(), (cols, rows))
        })
        .collect()
}

