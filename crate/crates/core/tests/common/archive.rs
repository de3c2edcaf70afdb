//! Random snapshot archives, a layout oracle computed from the record
//! format by hand, and a naive search.

use caseforge::evidence_store::{FsEntry, Region, SnapshotArchive};
use rand::rngs::StdRng;
use rand::Rng;
use std::collections::BTreeSet;

pub fn random_path(rng: &mut StdRng) -> String {
    let parts = rng.gen_range(1..=4);
    (0..parts)
        .map(|_| {
            let len = rng.gen_range(1..=8);
            (0..len).map(|_| *b"abcdefgh._-xyz01".get(rng.gen_range(0..16)).unwrap() as char).collect::<String>()
        })
        .map(|c| if c == "." || c == ".." { "d".to_string() } else { c })
        .collect::<Vec<_>>()
        .join("/")
}

pub fn random_bytes(rng: &mut StdRng, len: usize, alphabet: &[u8]) -> Vec<u8> {
    (0..len).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
}

/// A canonical archive with up to `max_entries` entries.
pub fn random_archive(rng: &mut StdRng, max_entries: usize, max_file: usize, max_slack: usize) -> SnapshotArchive {
    let mut seen = BTreeSet::new();
    let mut entries = Vec::new();
    for _ in 0..rng.gen_range(0..=max_entries) {
        let path = random_path(rng);
        if !seen.insert(path.clone()) {
            continue;
        }
        let mtime = rng.gen();
        if rng.gen_bool(0.25) {
            entries.push(FsEntry::dir(path, mtime));
        } else {
            let len = rng.gen_range(0..=max_file);
            entries.push(FsEntry::file(path, mtime, random_bytes(rng, len, &[0, 1, 0xff, b'a', b'z', 7])));
        }
    }
    let slack_len = rng.gen_range(0..=max_slack);
    let slack = random_bytes(rng, slack_len, &[0, 0x55, 0xaa, b'q']);
    SnapshotArchive::new(entries, slack).unwrap()
}

/// `(path, data_start, data_end)` for every file, straight from the record
/// layout: magic, then per entry kind(1) path_len(2) path mtime(8) and for
/// files size(8) data.
pub fn file_extents(a: &SnapshotArchive) -> Vec<(String, usize, usize)> {
    let mut off = 8;
    let mut out = Vec::new();
    for e in a.entries() {
        off += 1 + 2 + e.path.len() + 8;
        if !e.is_dir() {
            off += 8;
            out.push((e.path.clone(), off, off + e.data.len()));
            off += e.data.len();
        }
    }
    out
}

pub fn naive_search(image: &[u8], extents: &[(String, usize, usize)], patterns: &[Vec<u8>]) -> Vec<(u64, usize, Region)> {
    let mut hits = Vec::new();
    for offset in 0..image.len() {
        for (idx, p) in patterns.iter().enumerate() {
            if image[offset..].starts_with(p) {
                let region = extents
                    .iter()
                    .find(|(_, s, e)| *s <= offset && offset + p.len() <= *e)
                    .map(|(path, _, _)| Region::Allocated { path: path.clone() })
                    .unwrap_or(Region::Unallocated);
                hits.push((offset as u64, idx, region));
            }
        }
    }
    hits
}

pub struct PlantedImage {
    pub image: Vec<u8>,
    pub extents: Vec<(String, usize, usize)>,
    pub patterns: Vec<Vec<u8>>,
    /// Patterns planted only in slack.
    pub slack_only: Vec<usize>,
}

/// Roughly `size` bytes of archive with up to `max_patterns` patterns planted
/// in file data and slack; some patterns go only into slack.
pub fn planted_image(rng: &mut StdRng, size: usize, max_patterns: usize) -> PlantedImage {
    let alphabet = b"abcd\0";
    let files = rng.gen_range(1..=12);
    let per_file = size / 2 / files;
    let entries: Vec<FsEntry> = (0..files)
        .map(|i| {
            let len = rng.gen_range(0..=per_file);
            FsEntry::file(format!("data/f{i:02}"), 0, random_bytes(rng, len, alphabet))
        })
        .collect();
    let mut archive = SnapshotArchive::new(entries, Vec::new()).unwrap();
    let base = archive.serialize().len();
    archive.set_slack(random_bytes(rng, size.saturating_sub(base), alphabet));
    let mut image = archive.serialize();
    let extents = file_extents(&archive);
    let slack_start = base;

    let n = rng.gen_range(1..=max_patterns);
    let patterns: Vec<Vec<u8>> = (0..n)
        .map(|_| {
            let len = rng.gen_range(1..=24);
            random_bytes(rng, len, b"abcdxyz")
        })
        .collect();
    let slack_only: Vec<usize> = (0..n).filter(|_| rng.gen_bool(0.3)).collect();
    for (idx, p) in patterns.iter().enumerate() {
        for _ in 0..rng.gen_range(1..=4) {
            let in_slack = slack_only.contains(&idx) || rng.gen_bool(0.5) || extents.iter().all(|(_, s, e)| e - s < p.len());
            let at = if in_slack {
                if image.len() - slack_start < p.len() {
                    continue;
                }
                rng.gen_range(slack_start..=image.len() - p.len())
            } else {
                let fits: Vec<_> = extents.iter().filter(|(_, s, e)| e - s >= p.len()).collect();
                let (_, s, e) = fits[rng.gen_range(0..fits.len())];
                rng.gen_range(*s..=*e - p.len())
            };
            image[at..at + p.len()].copy_from_slice(p);
        }
    }
    PlantedImage { image, extents, patterns, slack_only }
}
