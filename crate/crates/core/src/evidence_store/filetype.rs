use serde::Serialize;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FileKind {
    Sqlite,
    Hprof,
    Xml,
    Jpeg,
    Zip,
    Unknown,
}

impl fmt::Display for FileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FileKind::Sqlite => "sqlite",
            FileKind::Hprof => "hprof",
            FileKind::Xml => "xml",
            FileKind::Jpeg => "jpeg",
            FileKind::Zip => "zip",
            FileKind::Unknown => "unknown",
        })
    }
}

const SIGNATURES: &[(&[u8], FileKind)] = &[
    (b"SQLite format 3\0", FileKind::Sqlite),
    (b"JAVA PROFILE 1.0.", FileKind::Hprof),
    (b"\xFF\xD8\xFF", FileKind::Jpeg),
    (b"PK\x03\x04", FileKind::Zip),
    (b"PK\x05\x06", FileKind::Zip),
    (b"<?xml", FileKind::Xml),
];

/// Classifies a file from its leading bytes.
pub fn identify_file_type(header: &[u8]) -> FileKind {
    for (magic, kind) in SIGNATURES {
        if header.starts_with(magic) {
            return *kind;
        }
    }
    // XML without a declaration, possibly behind a BOM and whitespace
    let body = header.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(header);
    let trimmed = body
        .iter()
        .position(|b| !b.is_ascii_whitespace())
        .map(|i| &body[i..])
        .unwrap_or(&[]);
    if trimmed.starts_with(b"<?xml") || trimmed.starts_with(b"<map") {
        return FileKind::Xml;
    }
    FileKind::Unknown
}
