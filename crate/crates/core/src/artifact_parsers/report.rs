use super::classify::{classify_pref, classify_value};
use super::prefs::{parse_shared_prefs, PrefsEntry, PrefsWarning};
use super::sqlite::{sqlite_read, SqliteTable};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Annotation {
    pub location: String,
    pub note: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrefsFileReport {
    pub path: String,
    pub format: &'static str,
    pub entries: Vec<PrefsEntry>,
    pub warnings: Vec<PrefsWarning>,
    pub annotations: Vec<Annotation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatabaseFileReport {
    pub path: String,
    pub format: &'static str,
    pub tables: Vec<SqliteTable>,
    pub annotations: Vec<Annotation>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Parses one shared_prefs file; a parse failure is kept in `error`.
pub fn prefs_report(path: &str, xml: &[u8]) -> PrefsFileReport {
    let mut report = PrefsFileReport {
        path: path.to_string(),
        format: "shared_prefs",
        entries: Vec::new(),
        warnings: Vec::new(),
        annotations: Vec::new(),
        error: None,
    };
    match parse_shared_prefs(xml) {
        Ok(parsed) => {
            report.annotations = parsed
                .document
                .entries
                .iter()
                .filter_map(|e| {
                    classify_pref(&e.value).map(|note| Annotation { location: e.key.clone(), note })
                })
                .collect();
            report.entries = parsed.document.entries;
            report.warnings = parsed.warnings;
        }
        Err(e) => report.error = Some(e.to_string()),
    }
    report
}

/// Reads one SQLite file; row positions in annotations are zero-based.
pub fn database_report(path: &str, db: &[u8]) -> DatabaseFileReport {
    let mut report = DatabaseFileReport {
        path: path.to_string(),
        format: "sqlite",
        tables: Vec::new(),
        annotations: Vec::new(),
        error: None,
    };
    match sqlite_read(db) {
        Ok(tables) => {
            for t in &tables {
                for (r, row) in t.rows.iter().enumerate() {
                    for (c, cell) in row.iter().enumerate() {
                        if let Some(note) = classify_value(cell) {
                            report.annotations.push(Annotation {
                                location: format!("{}[{r}].{}", t.name, t.columns[c]),
                                note,
                            });
                        }
                    }
                }
            }
            report.tables = tables;
        }
        Err(e) => report.error = Some(e.to_string()),
    }
    report
}
