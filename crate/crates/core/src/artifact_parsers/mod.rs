//! Decoders for app data: shared_prefs XML and SQLite databases.
//!
//! Both parsers are pure functions over bytes. [`classify_value`] adds
//! "timestamp?" and "token?" hints without touching the decoded values.

mod classify;
mod prefs;
mod report;
mod sqlite;

pub use classify::{
    classify_int, classify_pref, classify_text, classify_value, SECONDS_MAX, SECONDS_MIN, TIMESTAMP_MILLIS,
    TIMESTAMP_SECONDS, TOKEN, TOKEN_MIN_LEN,
};
pub use prefs::{
    is_embedded_json, parse_shared_prefs, render_shared_prefs, ParsedPrefs, PrefsDocument, PrefsEntry, PrefsError,
    PrefsValue, PrefsWarning,
};
pub use report::{database_report, prefs_report, Annotation, DatabaseFileReport, PrefsFileReport};
pub use sqlite::{decode_record, sqlite_read, varint, SqlValue, SqliteError, SqliteTable, SQLITE_MAGIC};
