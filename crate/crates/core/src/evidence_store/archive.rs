use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use thiserror::Error;

pub const MAGIC: &[u8; 8] = b"AEVDSNP1";

const KIND_END: u8 = 0x00;
const KIND_DIR: u8 = 0x01;
const KIND_FILE: u8 = 0x02;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ArchiveError {
    #[error("image does not start with the snapshot magic")]
    BadMagic,
    #[error("entry record truncated at offset {offset}")]
    TruncatedEntry { offset: usize },
    #[error("duplicate path {0:?}")]
    DuplicatePath(String),
    #[error("unknown entry kind 0x{kind:02x} at offset {offset}")]
    BadEntryKind { kind: u8, offset: usize },
    #[error("invalid path at offset {offset}: {reason}")]
    InvalidPath { offset: usize, reason: String },
    #[error("path {0:?} is longer than 65535 bytes")]
    PathTooLong(String),
    #[error("no such file: {0}")]
    NotFound(String),
    #[error("{0} is a directory")]
    IsDirectory(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArchiveWarning {
    /// Entry at `index` sorts before its predecessor.
    NotCanonicalOrder { index: usize, path: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Dir,
    File,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FsEntry {
    pub kind: EntryKind,
    pub path: String,
    pub mtime: u64,
    /// Empty for directories.
    pub data: Vec<u8>,
}

impl FsEntry {
    pub fn dir(path: impl Into<String>, mtime: u64) -> Self {
        FsEntry {
            kind: EntryKind::Dir,
            path: path.into(),
            mtime,
            data: Vec::new(),
        }
    }

    pub fn file(path: impl Into<String>, mtime: u64, data: impl Into<Vec<u8>>) -> Self {
        FsEntry {
            kind: EntryKind::File,
            path: path.into(),
            mtime,
            data: data.into(),
        }
    }

    pub fn is_dir(&self) -> bool {
        self.kind == EntryKind::Dir
    }

    pub fn size(&self) -> u64 {
        self.data.len() as u64
    }

    fn encoded_len(&self) -> usize {
        let base = 1 + 2 + self.path.len() + 8;
        match self.kind {
            EntryKind::Dir => base,
            EntryKind::File => base + 8 + self.data.len(),
        }
    }
}

/// Byte extents of one entry inside a serialized image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntryExtent {
    pub path: String,
    pub record_start: usize,
    /// `data_start..data_end` is the file content; empty for directories.
    pub data_start: usize,
    pub data_end: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SnapshotArchive {
    entries: Vec<FsEntry>,
    slack: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct ArchiveParse {
    pub archive: SnapshotArchive,
    pub extents: Vec<EntryExtent>,
    /// Offset of the terminator byte; slack starts right after it.
    pub terminator_offset: usize,
    pub warnings: Vec<ArchiveWarning>,
}

fn validate_path(path: &str) -> Result<(), String> {
    if path.is_empty() {
        return Err("empty path".into());
    }
    if path.starts_with('/') {
        return Err("leading '/'".into());
    }
    if path.split('/').any(|c| c.is_empty() || c == "." || c == "..") {
        return Err("empty, '.' or '..' component".into());
    }
    if path.len() > u16::MAX as usize {
        return Err("path longer than 65535 bytes".into());
    }
    Ok(())
}

impl SnapshotArchive {
    /// Builds a canonical archive: entries are sorted by path and must be unique.
    pub fn new(mut entries: Vec<FsEntry>, slack: Vec<u8>) -> Result<Self, ArchiveError> {
        for e in &entries {
            validate_path(&e.path).map_err(|reason| ArchiveError::InvalidPath { offset: 0, reason })?;
        }
        entries.sort_by(|a, b| a.path.as_bytes().cmp(b.path.as_bytes()));
        if let Some(w) = entries.windows(2).find(|w| w[0].path == w[1].path) {
            return Err(ArchiveError::DuplicatePath(w[0].path.clone()));
        }
        Ok(SnapshotArchive { entries, slack })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn parse(image: &[u8]) -> Result<Self, ArchiveError> {
        parse_archive(image).map(|p| p.archive)
    }

    pub fn entries(&self) -> &[FsEntry] {
        &self.entries
    }

    pub fn slack(&self) -> &[u8] {
        &self.slack
    }

    pub fn set_slack(&mut self, slack: Vec<u8>) {
        self.slack = slack;
    }

    pub fn is_canonical(&self) -> bool {
        self.entries
            .windows(2)
            .all(|w| w[0].path.as_bytes() < w[1].path.as_bytes())
    }

    /// Adds a directory entry for every missing ancestor of every entry.
    pub fn ensure_parent_dirs(&mut self, mtime: u64) {
        let present: HashSet<String> = self.entries.iter().map(|e| e.path.clone()).collect();
        let mut missing = BTreeMap::new();
        for e in &self.entries {
            let mut p = e.path.as_str();
            while let Some((parent, _)) = p.rsplit_once('/') {
                if !present.contains(parent) {
                    missing.insert(parent.to_string(), ());
                }
                p = parent;
            }
        }
        if missing.is_empty() {
            return;
        }
        self.entries
            .extend(missing.into_keys().map(|p| FsEntry::dir(p, mtime)));
        self.entries
            .sort_by(|a, b| a.path.as_bytes().cmp(b.path.as_bytes()));
    }

    pub fn serialize(&self) -> Vec<u8> {
        let len = MAGIC.len()
            + self.entries.iter().map(FsEntry::encoded_len).sum::<usize>()
            + 1
            + self.slack.len();
        let mut out = Vec::with_capacity(len);
        out.extend_from_slice(MAGIC);
        for e in &self.entries {
            match e.kind {
                EntryKind::Dir => out.push(KIND_DIR),
                EntryKind::File => out.push(KIND_FILE),
            }
            out.extend_from_slice(&(e.path.len() as u16).to_be_bytes());
            out.extend_from_slice(e.path.as_bytes());
            out.extend_from_slice(&e.mtime.to_be_bytes());
            if e.kind == EntryKind::File {
                out.extend_from_slice(&(e.data.len() as u64).to_be_bytes());
                out.extend_from_slice(&e.data);
            }
        }
        out.push(KIND_END);
        out.extend_from_slice(&self.slack);
        out
    }

    pub fn get(&self, path: &str) -> Option<&FsEntry> {
        self.entries
            .binary_search_by(|e| e.path.as_bytes().cmp(path.as_bytes()))
            .ok()
            .map(|i| &self.entries[i])
            .or_else(|| self.entries.iter().find(|e| e.path == path))
    }

    pub fn read_file(&self, path: &str) -> Result<&[u8], ArchiveError> {
        match self.get(path) {
            Some(e) if e.is_dir() => Err(ArchiveError::IsDirectory(path.to_string())),
            Some(e) => Ok(&e.data),
            None if self.is_dir(path) => Err(ArchiveError::IsDirectory(path.to_string())),
            None => Err(ArchiveError::NotFound(path.to_string())),
        }
    }

    /// True when `path` is an explicit directory entry or an ancestor of any entry.
    pub fn is_dir(&self, path: &str) -> bool {
        if let Some(e) = self.get(path) {
            return e.is_dir();
        }
        let prefix = format!("{path}/");
        self.entries.iter().any(|e| e.path.starts_with(&prefix))
    }

    /// Immediate children of `dir` as (name, is_dir), sorted by name.
    /// Directories implied only by deeper paths are included.
    pub fn children(&self, dir: &str) -> Vec<(String, bool)> {
        let prefix = if dir.is_empty() {
            String::new()
        } else {
            format!("{dir}/")
        };
        let mut out: BTreeMap<String, bool> = BTreeMap::new();
        for e in &self.entries {
            let Some(rest) = e.path.strip_prefix(&prefix) else {
                continue;
            };
            if rest.is_empty() {
                continue;
            }
            match rest.split_once('/') {
                Some((name, _)) => {
                    out.insert(name.to_string(), true);
                }
                None => {
                    let slot = out.entry(rest.to_string()).or_insert(false);
                    *slot |= e.is_dir();
                }
            }
        }
        out.into_iter().collect()
    }

    /// Files whose path starts with `dir/`, at any depth.
    pub fn files_under<'a>(&'a self, dir: &str) -> impl Iterator<Item = &'a FsEntry> + 'a {
        let prefix = if dir.is_empty() {
            String::new()
        } else {
            format!("{dir}/")
        };
        self.entries
            .iter()
            .filter(move |e| !e.is_dir() && e.path.starts_with(&prefix))
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    record_start: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ArchiveError> {
        if self.buf.len() - self.pos < n {
            return Err(ArchiveError::TruncatedEntry {
                offset: self.record_start,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, ArchiveError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ArchiveError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parses a serialized archive, keeping the byte extents of every entry.
pub fn parse_archive(image: &[u8]) -> Result<ArchiveParse, ArchiveError> {
    if image.len() < MAGIC.len() || &image[..MAGIC.len()] != MAGIC {
        return Err(ArchiveError::BadMagic);
    }
    let mut cur = Cursor {
        buf: image,
        pos: MAGIC.len(),
        record_start: MAGIC.len(),
    };
    let mut entries: Vec<FsEntry> = Vec::new();
    let mut extents = Vec::new();
    let mut warnings = Vec::new();
    let mut seen = HashSet::new();
    loop {
        cur.record_start = cur.pos;
        let kind = cur.take(1)?[0];
        let kind = match kind {
            KIND_END => break,
            KIND_DIR => EntryKind::Dir,
            KIND_FILE => EntryKind::File,
            other => {
                return Err(ArchiveError::BadEntryKind {
                    kind: other,
                    offset: cur.record_start,
                })
            }
        };
        let path_len = cur.u16()? as usize;
        let raw_path = cur.take(path_len)?;
        let path = std::str::from_utf8(raw_path)
            .map_err(|_| ArchiveError::InvalidPath {
                offset: cur.record_start,
                reason: "not UTF-8".into(),
            })?
            .to_string();
        validate_path(&path).map_err(|reason| ArchiveError::InvalidPath {
            offset: cur.record_start,
            reason,
        })?;
        let mtime = cur.u64()?;
        let (data, data_start) = match kind {
            EntryKind::Dir => (Vec::new(), cur.pos),
            EntryKind::File => {
                let size = cur.u64()?;
                let size = usize::try_from(size).map_err(|_| ArchiveError::TruncatedEntry {
                    offset: cur.record_start,
                })?;
                let start = cur.pos;
                (cur.take(size)?.to_vec(), start)
            }
        };
        if !seen.insert(path.clone()) {
            return Err(ArchiveError::DuplicatePath(path));
        }
        if let Some(prev) = entries.last() {
            if prev.path.as_bytes() > path.as_bytes() {
                warnings.push(ArchiveWarning::NotCanonicalOrder {
                    index: entries.len(),
                    path: path.clone(),
                });
            }
        }
        extents.push(EntryExtent {
            path: path.clone(),
            record_start: cur.record_start,
            data_start,
            data_end: cur.pos,
        });
        entries.push(FsEntry {
            kind,
            path,
            mtime,
            data,
        });
    }
    let terminator_offset = cur.pos - 1;
    Ok(ArchiveParse {
        archive: SnapshotArchive {
            entries,
            slack: image[cur.pos..].to_vec(),
        },
        extents,
        terminator_offset,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SnapshotArchive {
        SnapshotArchive::new(
            vec![
                FsEntry::file("data/x", 7, b"abc".to_vec()),
                FsEntry::dir("data", 5),
            ],
            vec![0xEE; 10],
        )
        .unwrap()
    }

    #[test]
    fn magic_and_terminator_only() {
        let mut img = MAGIC.to_vec();
        img.push(0);
        let a = SnapshotArchive::parse(&img).unwrap();
        assert!(a.entries().is_empty());
        assert!(a.slack().is_empty());
    }

    #[test]
    fn one_file_with_slack() {
        let a = SnapshotArchive::new(vec![FsEntry::file("data/x", 1, b"abc".to_vec())], vec![0; 10]).unwrap();
        let img = a.serialize();
        let p = parse_archive(&img).unwrap();
        assert_eq!(p.archive.entries().len(), 1);
        assert_eq!(p.archive.slack().len(), 10);
        let ext = &p.extents[0];
        assert_eq!(&img[ext.data_start..ext.data_end], b"abc");
        assert_eq!(p.terminator_offset, img.len() - 11);
    }

    #[test]
    fn record_layout_is_exact() {
        let a = SnapshotArchive::new(vec![FsEntry::file("ab", 0x0102, b"Z".to_vec())], vec![]).unwrap();
        let mut want = MAGIC.to_vec();
        want.push(0x02);
        want.extend_from_slice(&[0x00, 0x02]);
        want.extend_from_slice(b"ab");
        want.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0x01, 0x02]);
        want.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0, 1]);
        want.push(b'Z');
        want.push(0x00);
        assert_eq!(a.serialize(), want);
    }

    #[test]
    fn bad_magic_and_truncation() {
        assert_eq!(SnapshotArchive::parse(b"NOTMAGIC\0"), Err(ArchiveError::BadMagic));
        let img = sample().serialize();
        let cut = &img[..20];
        assert!(matches!(
            SnapshotArchive::parse(cut),
            Err(ArchiveError::TruncatedEntry { .. })
        ));
        // missing terminator is a truncation too
        let no_term = &img[..img.len() - 11];
        assert!(matches!(
            SnapshotArchive::parse(no_term),
            Err(ArchiveError::TruncatedEntry { .. })
        ));
    }

    #[test]
    fn duplicate_and_order() {
        let e = FsEntry::dir("a", 0);
        assert!(matches!(
            SnapshotArchive::new(vec![e.clone(), e], vec![]),
            Err(ArchiveError::DuplicatePath(_))
        ));
        // hand-assemble an out-of-order image
        let a = SnapshotArchive {
            entries: vec![FsEntry::dir("b", 0), FsEntry::dir("a", 0)],
            slack: vec![],
        };
        let p = parse_archive(&a.serialize()).unwrap();
        assert_eq!(p.warnings.len(), 1);
        assert_eq!(p.archive.serialize(), a.serialize());
        let dup = SnapshotArchive {
            entries: vec![FsEntry::dir("a", 0), FsEntry::dir("a", 1)],
            slack: vec![],
        };
        assert!(matches!(
            parse_archive(&dup.serialize()),
            Err(ArchiveError::DuplicatePath(_))
        ));
    }

    #[test]
    fn read_file_cases() {
        let a = sample();
        assert_eq!(a.read_file("data/x").unwrap(), b"abc");
        assert!(matches!(a.read_file("data/y"), Err(ArchiveError::NotFound(_))));
        assert!(matches!(a.read_file("data"), Err(ArchiveError::IsDirectory(_))));
    }

    #[test]
    fn implicit_dirs_and_children() {
        let mut a = SnapshotArchive::new(
            vec![
                FsEntry::file("data/com.a.b/shared_prefs/p.xml", 0, b"x".to_vec()),
                FsEntry::file("data/com.a.b/top.txt", 0, b"y".to_vec()),
            ],
            vec![],
        )
        .unwrap();
        assert!(a.is_dir("data/com.a.b"));
        assert_eq!(
            a.children("data/com.a.b"),
            vec![("shared_prefs".to_string(), true), ("top.txt".to_string(), false)]
        );
        a.ensure_parent_dirs(3);
        assert!(a.get("data").unwrap().is_dir());
        assert!(a.is_canonical());
        assert_eq!(a.entries().len(), 5);
    }
}
