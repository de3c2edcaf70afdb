use super::archive::{parse_archive, EntryExtent};
use memchr::memmem::Finder;
use serde::{Serialize, Serializer};
use thiserror::Error;

pub const MAX_PATTERN_LEN: usize = 1024;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SearchError {
    #[error("no patterns given")]
    NoPatterns,
    #[error("empty pattern")]
    EmptyPattern,
    #[error("pattern {0:?} exceeds 1024 bytes")]
    PatternTooLong(String),
    #[error("bad hex pattern {0:?}")]
    BadHex(String),
}

/// A search pattern: raw bytes plus the label used when reporting hits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    pub bytes: Vec<u8>,
    pub label: String,
}

impl Pattern {
    pub fn text(s: &str) -> Self {
        Pattern {
            bytes: s.as_bytes().to_vec(),
            label: s.to_string(),
        }
    }

    pub fn bytes(bytes: &[u8]) -> Self {
        Pattern {
            bytes: bytes.to_vec(),
            label: format!("hex:{}", hex::encode(bytes)),
        }
    }

    /// `hex:<digits>` selects a byte signature; anything else is literal text.
    pub fn parse(spec: &str) -> Result<Self, SearchError> {
        match spec.strip_prefix("hex:") {
            Some(digits) => {
                let bytes = hex::decode(digits.replace([' ', ':'], ""))
                    .map_err(|_| SearchError::BadHex(spec.to_string()))?;
                Ok(Pattern {
                    bytes,
                    label: spec.to_string(),
                })
            }
            None => Ok(Pattern::text(spec)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Region {
    Allocated { path: String },
    Unallocated,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchHit {
    pub offset: u64,
    pub pattern: String,
    pub region: Region,
}

impl Serialize for SearchHit {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut m = s.serialize_map(None)?;
        m.serialize_entry("offset", &self.offset)?;
        m.serialize_entry("pattern", &self.pattern)?;
        match &self.region {
            Region::Allocated { path } => {
                m.serialize_entry("region", "allocated")?;
                m.serialize_entry("path", path)?;
            }
            Region::Unallocated => m.serialize_entry("region", "unallocated")?,
        }
        m.end()
    }
}

/// Reports every occurrence of every pattern, overlaps included, ordered by
/// offset and then by pattern position.
///
/// A hit is `Allocated` only when it lies entirely inside one file's data
/// bytes. Slack, record headers and paths count as unallocated. Images that
/// do not parse as an archive are labeled unallocated throughout.
pub fn keyword_search(image: &[u8], patterns: &[Pattern]) -> Result<Vec<SearchHit>, SearchError> {
    if patterns.is_empty() {
        return Err(SearchError::NoPatterns);
    }
    for p in patterns {
        if p.bytes.is_empty() {
            return Err(SearchError::EmptyPattern);
        }
        if p.bytes.len() > MAX_PATTERN_LEN {
            return Err(SearchError::PatternTooLong(p.label.clone()));
        }
    }
    let mut files: Vec<EntryExtent> = parse_archive(image)
        .map(|p| p.extents)
        .unwrap_or_default()
        .into_iter()
        .filter(|e| e.data_end > e.data_start)
        .collect();
    files.sort_by_key(|e| e.data_start);

    let mut hits = Vec::new();
    for (idx, p) in patterns.iter().enumerate() {
        let finder = Finder::new(&p.bytes);
        let mut pos = 0;
        while let Some(rel) = finder.find(&image[pos..]) {
            let offset = pos + rel;
            hits.push((offset, idx, classify(&files, offset, p.bytes.len())));
            pos = offset + 1;
        }
    }
    hits.sort_by_key(|(off, idx, _)| (*off, *idx));
    Ok(hits
        .into_iter()
        .map(|(offset, idx, region)| SearchHit {
            offset: offset as u64,
            pattern: patterns[idx].label.clone(),
            region,
        })
        .collect())
}

fn classify(files: &[EntryExtent], offset: usize, len: usize) -> Region {
    // last file whose data starts at or before the hit
    let i = files.partition_point(|e| e.data_start <= offset);
    if i == 0 {
        return Region::Unallocated;
    }
    let e = &files[i - 1];
    if offset + len <= e.data_end {
        Region::Allocated {
            path: e.path.clone(),
        }
    } else {
        Region::Unallocated
    }
}
