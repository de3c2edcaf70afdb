use quick_xml::escape::escape;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::Serialize;
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PrefsError {
    #[error("malformed shared_prefs XML: {0}")]
    MalformedXml(String),
    #[error("duplicate key {0:?}")]
    DuplicateKey(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PrefsValue {
    String { value: String, json_embedded: bool },
    Int { value: i64 },
    Long { value: i64 },
    Float { value: f64 },
    Boolean { value: bool },
    StringSet { value: Vec<String> },
}

impl PrefsValue {
    /// A string value, with embedded-JSON detection applied.
    pub fn string(s: impl Into<String>) -> Self {
        let value = s.into();
        let json_embedded = is_embedded_json(&value);
        PrefsValue::String { value, json_embedded }
    }

    pub fn json_embedded(&self) -> bool {
        matches!(self, PrefsValue::String { json_embedded: true, .. })
    }
}

/// True when `s` is, in full, a JSON object or array.
pub fn is_embedded_json(s: &str) -> bool {
    matches!(
        serde_json::from_str::<serde_json::Value>(s),
        Ok(serde_json::Value::Object(_) | serde_json::Value::Array(_))
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrefsEntry {
    pub key: String,
    #[serde(flatten)]
    pub value: PrefsValue,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PrefsDocument {
    pub entries: Vec<PrefsEntry>,
}

impl PrefsDocument {
    pub fn get(&self, key: &str) -> Option<&PrefsValue> {
        self.entries.iter().find(|e| e.key == key).map(|e| &e.value)
    }

    /// Appends an entry; keys must stay unique.
    pub fn push(&mut self, key: impl Into<String>, value: PrefsValue) -> Result<(), PrefsError> {
        let key = key.into();
        if self.get(&key).is_some() {
            return Err(PrefsError::DuplicateKey(key));
        }
        self.entries.push(PrefsEntry { key, value });
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PrefsWarning {
    pub element: String,
    pub key: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParsedPrefs {
    pub document: PrefsDocument,
    pub warnings: Vec<PrefsWarning>,
}

fn malformed(e: impl std::fmt::Display) -> PrefsError {
    PrefsError::MalformedXml(e.to_string())
}

pub fn parse_shared_prefs(xml: &[u8]) -> Result<ParsedPrefs, PrefsError> {
    let text = std::str::from_utf8(xml).map_err(malformed)?;
    let mut reader = Reader::from_str(text);
    let mut doc = PrefsDocument::default();
    let mut warnings = Vec::new();
    let mut seen = HashSet::new();

    // find <map>
    loop {
        match reader.read_event().map_err(malformed)? {
            Event::Decl(_) | Event::Comment(_) | Event::PI(_) | Event::DocType(_) => {}
            Event::Text(t) if is_blank(&t) => {}
            Event::Empty(e) if e.name().as_ref() == b"map" => {
                expect_eof(&mut reader)?;
                return Ok(ParsedPrefs { document: doc, warnings });
            }
            Event::Start(e) if e.name().as_ref() == b"map" => break,
            Event::Eof => return Err(malformed("no <map> root element")),
            other => return Err(malformed(format!("unexpected {other:?} before <map>"))),
        }
    }

    loop {
        let (el, empty) = match reader.read_event().map_err(malformed)? {
            Event::Start(e) => (e.into_owned(), false),
            Event::Empty(e) => (e.into_owned(), true),
            Event::End(_) => break,
            Event::Text(t) if is_blank(&t) => continue,
            Event::Comment(_) => continue,
            Event::Eof => return Err(malformed("unclosed <map>")),
            other => return Err(malformed(format!("unexpected {other:?} inside <map>"))),
        };
        let tag = String::from_utf8_lossy(el.name().as_ref()).into_owned();
        let key = attr(&el, "name")?;
        let value = match tag.as_str() {
            "string" => {
                let body = if empty { String::new() } else { read_text(&mut reader, "string")? };
                PrefsValue::string(body)
            }
            "int" | "long" | "float" | "boolean" => {
                if !empty {
                    let body = read_text(&mut reader, &tag)?;
                    if !body.trim().is_empty() {
                        return Err(malformed(format!("<{tag}> carries text content")));
                    }
                }
                let raw = attr(&el, "value")?
                    .ok_or_else(|| malformed(format!("<{tag}> without a value attribute")))?;
                scalar(&tag, &raw)?
            }
            "set" => PrefsValue::StringSet {
                value: if empty { Vec::new() } else { read_set(&mut reader)? },
            },
            _ => {
                if !empty {
                    reader.read_to_end(el.name()).map_err(malformed)?;
                }
                warnings.push(PrefsWarning {
                    element: tag,
                    key,
                    message: "unknown element skipped".into(),
                });
                continue;
            }
        };
        let key = key.ok_or_else(|| malformed(format!("<{tag}> without a name attribute")))?;
        if !seen.insert(key.clone()) {
            return Err(PrefsError::DuplicateKey(key));
        }
        doc.entries.push(PrefsEntry { key, value });
    }
    expect_eof(&mut reader)?;
    Ok(ParsedPrefs { document: doc, warnings })
}

fn is_blank(t: &quick_xml::events::BytesText) -> bool {
    t.iter().all(|b| b.is_ascii_whitespace())
}

fn expect_eof(reader: &mut Reader<&[u8]>) -> Result<(), PrefsError> {
    loop {
        match reader.read_event().map_err(malformed)? {
            Event::Eof => return Ok(()),
            Event::Comment(_) | Event::PI(_) => {}
            Event::Text(t) if is_blank(&t) => {}
            other => return Err(malformed(format!("content after </map>: {other:?}"))),
        }
    }
}

fn attr(el: &BytesStart, name: &str) -> Result<Option<String>, PrefsError> {
    match el.try_get_attribute(name).map_err(malformed)? {
        Some(a) => Ok(Some(a.unescape_value().map_err(malformed)?.into_owned())),
        None => Ok(None),
    }
}

fn scalar(tag: &str, raw: &str) -> Result<PrefsValue, PrefsError> {
    let bad = || malformed(format!("<{tag}> value {raw:?}"));
    Ok(match tag {
        "int" => PrefsValue::Int { value: raw.trim().parse().map_err(|_| bad())? },
        "long" => PrefsValue::Long { value: raw.trim().parse().map_err(|_| bad())? },
        "float" => PrefsValue::Float { value: raw.trim().parse().map_err(|_| bad())? },
        _ => PrefsValue::Boolean {
            value: match raw.trim() {
                "true" => true,
                "false" => false,
                _ => return Err(bad()),
            },
        },
    })
}

/// Text content up to the matching end tag; child elements are an error.
fn read_text(reader: &mut Reader<&[u8]>, tag: &str) -> Result<String, PrefsError> {
    let mut out = String::new();
    loop {
        match reader.read_event().map_err(malformed)? {
            Event::Text(t) => out.push_str(&t.unescape().map_err(malformed)?),
            Event::CData(c) => out.push_str(std::str::from_utf8(&c).map_err(malformed)?),
            Event::Comment(_) => {}
            Event::End(_) => return Ok(out),
            Event::Eof => return Err(malformed(format!("unclosed <{tag}>"))),
            other => return Err(malformed(format!("unexpected {other:?} inside <{tag}>"))),
        }
    }
}

fn read_set(reader: &mut Reader<&[u8]>) -> Result<Vec<String>, PrefsError> {
    let mut out = Vec::new();
    loop {
        match reader.read_event().map_err(malformed)? {
            Event::Start(e) if e.name().as_ref() == b"string" => out.push(read_text(reader, "string")?),
            Event::Empty(e) if e.name().as_ref() == b"string" => out.push(String::new()),
            Event::Text(t) if is_blank(&t) => {}
            Event::Comment(_) => {}
            Event::End(_) => return Ok(out),
            Event::Eof => return Err(malformed("unclosed <set>")),
            other => return Err(malformed(format!("unexpected {other:?} inside <set>"))),
        }
    }
}

/// Renders in the layout Android itself writes.
pub fn render_shared_prefs(doc: &PrefsDocument) -> String {
    let mut out = String::from("<?xml version='1.0' encoding='utf-8' standalone='yes' ?>\n");
    if doc.entries.is_empty() {
        out.push_str("<map />\n");
        return out;
    }
    out.push_str("<map>\n");
    for PrefsEntry { key, value } in &doc.entries {
        let name = escape(key.as_str());
        match value {
            PrefsValue::String { value, .. } => {
                out.push_str(&format!("    <string name=\"{name}\">{}</string>\n", escape(value.as_str())))
            }
            PrefsValue::Int { value } => out.push_str(&format!("    <int name=\"{name}\" value=\"{value}\" />\n")),
            PrefsValue::Long { value } => out.push_str(&format!("    <long name=\"{name}\" value=\"{value}\" />\n")),
            PrefsValue::Float { value } => out.push_str(&format!("    <float name=\"{name}\" value=\"{value}\" />\n")),
            PrefsValue::Boolean { value } => {
                out.push_str(&format!("    <boolean name=\"{name}\" value=\"{value}\" />\n"))
            }
            PrefsValue::StringSet { value } if value.is_empty() => {
                out.push_str(&format!("    <set name=\"{name}\" />\n"))
            }
            PrefsValue::StringSet { value } => {
                out.push_str(&format!("    <set name=\"{name}\">\n"));
                for s in value {
                    out.push_str(&format!("        <string>{}</string>\n", escape(s.as_str())));
                }
                out.push_str("    </set>\n");
            }
        }
    }
    out.push_str("</map>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(xml: &str) -> ParsedPrefs {
        parse_shared_prefs(xml.as_bytes()).unwrap()
    }

    #[test]
    fn single_string() {
        let p = parse(r#"<map><string name="user">alice</string></map>"#);
        assert_eq!(p.document.entries.len(), 1);
        assert_eq!(p.document.get("user"), Some(&PrefsValue::String { value: "alice".into(), json_embedded: false }));
    }

    #[test]
    fn json_array_flagged() {
        let p = parse(r#"<map><string name="acct">["a","b"]</string></map>"#);
        assert!(p.document.get("acct").unwrap().json_embedded());
    }

    #[test]
    fn typed_scalars() {
        let p = parse(r#"<map><boolean name="synced" value="true"/><int name="n" value="7"/></map>"#);
        assert_eq!(p.document.get("synced"), Some(&PrefsValue::Boolean { value: true }));
        assert_eq!(p.document.get("n"), Some(&PrefsValue::Int { value: 7 }));
    }

    #[test]
    fn android_layout() {
        let xml = "<?xml version='1.0' encoding='utf-8' standalone='yes' ?>\n<map>\n    \
                   <long name=\"last_sync\" value=\"1400000000123\" />\n    \
                   <float name=\"ratio\" value=\"0.5\" />\n    \
                   <set name=\"hosts\">\n        <string>a.example</string>\n        <string>b.example</string>\n    </set>\n    \
                   <string name=\"note\">  spaced &amp; escaped  </string>\n</map>\n";
        let d = parse(xml).document;
        assert_eq!(d.get("last_sync"), Some(&PrefsValue::Long { value: 1_400_000_000_123 }));
        assert_eq!(d.get("ratio"), Some(&PrefsValue::Float { value: 0.5 }));
        assert_eq!(
            d.get("hosts"),
            Some(&PrefsValue::StringSet { value: vec!["a.example".into(), "b.example".into()] })
        );
        assert_eq!(d.get("note"), Some(&PrefsValue::string("  spaced & escaped  ")));
    }

    #[test]
    fn scalars_are_not_embedded_json() {
        for s in ["7", "\"x\"", "true", "null", "{\"a\":1} trailing", "[1,"] {
            assert!(!is_embedded_json(s), "{s}");
        }
        assert!(is_embedded_json(" {\"a\": [1]} "));
    }

    #[test]
    fn unknown_element_warns() {
        let p = parse(r#"<map><null name="gone"/><widget name="w"><x/></widget><int name="n" value="1"/></map>"#);
        assert_eq!(p.document.entries.len(), 1);
        assert_eq!(p.warnings.len(), 2);
        assert_eq!(p.warnings[0].key.as_deref(), Some("gone"));
    }

    #[test]
    fn errors() {
        let dup = r#"<map><int name="a" value="1"/><long name="a" value="2"/></map>"#;
        assert_eq!(parse_shared_prefs(dup.as_bytes()), Err(PrefsError::DuplicateKey("a".into())));
        for bad in [
            "<map><string name=\"a\">x</map>",
            "<prefs/>",
            "<map><int name=\"n\" value=\"seven\"/></map>",
            "<map><boolean name=\"b\" value=\"yes\"/></map>",
            "<map><string>nameless</string></map>",
            "",
        ] {
            assert!(matches!(parse_shared_prefs(bad.as_bytes()), Err(PrefsError::MalformedXml(_))), "{bad}");
        }
    }

    #[test]
    fn empty_map() {
        assert!(parse("<map />").document.entries.is_empty());
        assert_eq!(render_shared_prefs(&PrefsDocument::default()).lines().last(), Some("<map />"));
    }

    fn value() -> impl Strategy<Value = PrefsValue> {
        let text = "[ -~\u{e9}\u{4e2d}\n\t]{0,24}";
        prop_oneof![
            text.prop_map(PrefsValue::string),
            prop::collection::vec(any::<i64>(), 0..3).prop_map(|v| PrefsValue::string(serde_json::to_string(&v).unwrap())),
            any::<i32>().prop_map(|v| PrefsValue::Int { value: v as i64 }),
            any::<i64>().prop_map(|value| PrefsValue::Long { value }),
            (-1e12f64..1e12).prop_map(|value| PrefsValue::Float { value }),
            any::<bool>().prop_map(|value| PrefsValue::Boolean { value }),
            prop::collection::vec(text, 0..4).prop_map(|value| PrefsValue::StringSet { value }),
        ]
    }

    proptest! {
        #[test]
        fn render_then_parse_is_identity(entries in prop::collection::btree_map("[a-zA-Z_.\"&<>' ]{1,12}", value(), 0..8)) {
            let mut doc = PrefsDocument::default();
            for (k, v) in entries {
                doc.push(k, v).unwrap();
            }
            let back = parse_shared_prefs(render_shared_prefs(&doc).as_bytes()).unwrap();
            prop_assert!(back.warnings.is_empty());
            prop_assert_eq!(back.document, doc);
        }
    }
}
