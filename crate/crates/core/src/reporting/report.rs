use super::ledger::{read_jsonl, ChangeLedgerEntry, LedgerError};
use crate::acquisition::{AcquiredImage, DeviceIdentity};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const CASE_FILE: &str = "case.json";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_MD: &str = "report.md";
const IDENTITY_FILE: &str = "identity.json";
const ANNOTATIONS_FILE: &str = "annotations.json";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("case directory {0} has no ledger entries or no image metadata")]
    EmptyCase(PathBuf),
    #[error("{path}: {reason}")]
    BadInput { path: PathBuf, reason: String },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseInfo {
    pub case_id: String,
    pub created: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageSection {
    #[serde(flatten)]
    pub image: AcquiredImage,
    pub meta_file: String,
    pub status: String,
    pub hash_statement: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub case_id: String,
    pub created: u64,
    pub tool_version: String,
    pub device: Option<DeviceIdentity>,
    pub images: Vec<ImageSection>,
    pub ledger: Vec<ChangeLedgerEntry>,
    pub findings: BTreeMap<String, Value>,
    pub annotations: BTreeMap<String, Value>,
    pub warnings: Vec<String>,
}

impl CaseReport {
    pub fn unverified_images(&self) -> impl Iterator<Item = &ImageSection> {
        self.images.iter().filter(|i| !i.image.verified)
    }

    pub fn mutating_changes(&self) -> impl Iterator<Item = &ChangeLedgerEntry> {
        self.ledger.iter().filter(|e| e.mutating)
    }
}

#[derive(Debug, Clone)]
pub struct RenderedReport {
    pub report: CaseReport,
    /// Canonical JSON: sorted keys, compact separators, trailing newline.
    pub json: String,
    pub markdown: String,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, ReportError> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| ReportError::BadInput {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn sorted_files(dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    out.sort();
    Ok(out)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Assembles the report from the case directory contents alone; nothing
/// here reads the wall clock.
pub fn generate_report(case_dir: &Path) -> Result<RenderedReport, ReportError> {
    let ledger_path = case_dir.join(LEDGER_FILE);
    let ledger = if ledger_path.exists() {
        read_jsonl(&ledger_path)?
    } else {
        Vec::new()
    };
    let files = sorted_files(case_dir)?;
    let mut images = Vec::new();
    let mut findings: BTreeMap<String, Value> = BTreeMap::new();
    let mut heap = serde_json::Map::new();
    let mut warnings = Vec::new();

    for path in &files {
        let name = file_name(path);
        if name.ends_with(".img.meta") {
            let image: AcquiredImage = read_json(path)?;
            let (status, hash_statement) = if image.verified && image.digests_match() {
                (
                    "VERIFIED",
                    format!(
                        "MD5 and SHA1 of block device {} match those of forensic image {}",
                        image.device_path, image.bytes_path
                    ),
                )
            } else {
                warnings.push(format!("UNVERIFIED image {}: device and local digests differ", image.partition));
                (
                    "UNVERIFIED",
                    format!(
                        "MD5/SHA1 of block device {} DO NOT match forensic image {}",
                        image.device_path, image.bytes_path
                    ),
                )
            };
            images.push(ImageSection {
                image,
                meta_file: name,
                status: status.into(),
                hash_statement,
            });
            continue;
        }
        let key = match name.as_str() {
            "apps.json" => "apps",
            "prefs.json" => "prefs",
            "databases.json" => "databases",
            "accounts.json" => "accounts",
            "accounts-logcat.json" => "accounts_logcat",
            "search-hits.jsonl" => {
                let text = fs::read_to_string(path)?;
                let hits = text
                    .lines()
                    .filter(|l| !l.trim().is_empty())
                    .map(|l| {
                        serde_json::from_str::<Value>(l).map_err(|e| ReportError::BadInput {
                            path: path.clone(),
                            reason: e.to_string(),
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                findings.insert("search_hits".into(), Value::Array(hits));
                continue;
            }
            "deodex-worklist.txt" => {
                let text = fs::read_to_string(path)?;
                let items = text.lines().map(|l| Value::String(l.to_string())).collect();
                findings.insert("deodex_worklist".into(), Value::Array(items));
                continue;
            }
            n if n.starts_with("heap-") && n.ends_with(".json") => {
                heap.insert(n.to_string(), read_json(path)?);
                continue;
            }
            _ => continue,
        };
        findings.insert(key.into(), read_json(path)?);
    }
    if !heap.is_empty() {
        findings.insert("heap".into(), Value::Object(heap));
    }

    if ledger.is_empty() || images.is_empty() {
        return Err(ReportError::EmptyCase(case_dir.to_path_buf()));
    }
    for e in &ledger {
        if e.mutating && e.justification.trim().is_empty() {
            warnings.push(format!("ledger entry {} ({}) is mutating but unjustified", e.seq, e.operation));
        }
    }

    let case_path = case_dir.join(CASE_FILE);
    let info = if case_path.exists() {
        read_json::<CaseInfo>(&case_path)?
    } else {
        CaseInfo {
            case_id: file_name(case_dir),
            created: ledger.iter().map(|e| e.timestamp).min().unwrap_or(0),
        }
    };
    let identity_path = case_dir.join(IDENTITY_FILE);
    let device = if identity_path.exists() {
        Some(read_json(&identity_path)?)
    } else {
        None
    };
    let annotations_path = case_dir.join(ANNOTATIONS_FILE);
    let annotations = if annotations_path.exists() {
        read_json(&annotations_path)?
    } else {
        BTreeMap::new()
    };

    let report = CaseReport {
        case_id: info.case_id,
        created: info.created,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        device,
        images,
        ledger,
        findings,
        annotations,
        warnings,
    };
    // serde_json maps are BTreeMaps here, so going through Value sorts keys
    let value = serde_json::to_value(&report).expect("report serializes");
    let mut json = serde_json::to_string(&value).expect("value serializes");
    json.push('\n');
    let markdown = render_markdown(&report);
    Ok(RenderedReport { report, json, markdown })
}

/// Generates and writes `report.json` and `report.md` into the case directory.
pub fn write_report(case_dir: &Path) -> Result<RenderedReport, ReportError> {
    let r = generate_report(case_dir)?;
    fs::write(case_dir.join(REPORT_JSON), &r.json)?;
    fs::write(case_dir.join(REPORT_MD), &r.markdown)?;
    Ok(r)
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

fn render_markdown(r: &CaseReport) -> String {
    let mut md = String::new();
    let _ = writeln!(md, "# Case report: {}\n", r.case_id);
    let _ = writeln!(md, "- Created: {}", r.created);
    let _ = writeln!(md, "- Tool version: {}\n", r.tool_version);

    let unverified: Vec<_> = r.unverified_images().collect();
    if !unverified.is_empty() {
        let _ = writeln!(md, "## UNVERIFIED EVIDENCE\n");
        for i in &unverified {
            let _ = writeln!(
                md,
                "> **UNVERIFIED**: `{}` ({}) - device and image digests differ. Do not rely on this image.",
                i.image.partition, i.image.bytes_path
            );
        }
        md.push('\n');
    }

    md.push_str("## Device\n\n");
    match &r.device {
        Some(d) => {
            let _ = writeln!(md, "- Model: {}", d.model);
            let _ = writeln!(md, "- Android version: {}", d.android_version);
            let _ = writeln!(md, "- Bootloader: {}", d.bootloader_state);
            let _ = writeln!(md, "- Encryption suspected: {}", d.encryption_suspected);
            let _ = writeln!(md, "- Screen lock: {}\n", d.screen_lock);
        }
        None => md.push_str("Device was not identified.\n\n"),
    }

    md.push_str("## Evidence images\n\n");
    md.push_str("| Partition | Size | Device MD5 | Image MD5 | Device SHA1 | Image SHA1 | Status |\n");
    md.push_str("|---|---|---|---|---|---|---|\n");
    for i in &r.images {
        let im = &i.image;
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} | {} |",
            im.partition, im.size, im.device_md5, im.local_md5, im.device_sha1, im.local_sha1, i.status
        );
    }
    md.push('\n');
    for i in &r.images {
        let _ = writeln!(md, "- {}", i.hash_statement);
    }
    md.push('\n');

    md.push_str("## Changes made to the device\n\n");
    let changes: Vec<_> = r.mutating_changes().collect();
    if changes.is_empty() {
        md.push_str("No device-state changes were recorded.\n\n");
    } else {
        for e in changes {
            let flash = if e.flash_mutating { " **(flash contents changed)**" } else { "" };
            let _ = writeln!(
                md,
                "{}. [{}] {} on {}{}: {}",
                e.seq, e.timestamp, e.operation, e.target, flash, e.justification
            );
        }
        md.push('\n');
    }

    md.push_str("## Full ledger\n\n| Seq | Time | Operation | Target | Mutating | Justification |\n|---|---|---|---|---|---|\n");
    for e in &r.ledger {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} | {} |",
            e.seq,
            e.timestamp,
            md_cell(&e.operation),
            md_cell(&e.target),
            if e.mutating { "yes" } else { "no" },
            md_cell(&e.justification)
        );
    }
    md.push('\n');

    if !r.findings.is_empty() {
        md.push_str("## Findings\n\n");
        for (k, v) in &r.findings {
            let count = match v {
                Value::Array(a) => format!("{} item(s)", a.len()),
                Value::Object(o) => format!("{} key(s)", o.len()),
                _ => "present".to_string(),
            };
            let _ = writeln!(md, "- **{k}**: {count} (see report.json)");
        }
        md.push('\n');
    }
    if !r.annotations.is_empty() {
        md.push_str("## Annotations\n\n");
        for (k, v) in &r.annotations {
            let _ = writeln!(md, "- {k}: {v}");
        }
        md.push('\n');
    }
    if !r.warnings.is_empty() {
        md.push_str("## Warnings\n\n");
        for w in &r.warnings {
            let _ = writeln!(md, "- {w}");
        }
    }
    md
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::StepClock;
    use crate::reporting::Ledger;
    use std::sync::Arc;

    fn image(verified: bool) -> AcquiredImage {
        AcquiredImage {
            partition: "userdata".into(),
            device_path: "/dev/block/platform/msm_sdcc.1/by-name/userdata".into(),
            bytes_path: "userdata.img".into(),
            size: 0,
            local_md5: "d41d8cd98f00b204e9800998ecf8427e".into(),
            local_sha1: "da39a3ee5e6b4b0d3255bfef95601890afd80709".into(),
            device_md5: if verified { "d41d8cd98f00b204e9800998ecf8427e" } else { "00" }.into(),
            device_sha1: "da39a3ee5e6b4b0d3255bfef95601890afd80709".into(),
            verified,
            ciphertext: false,
            acquired_at: 5,
        }
    }

    fn case(verified: bool) -> tempfile::TempDir {
        let dir = tempfile::tempdir().unwrap();
        let mut l = Ledger::new(Arc::new(StepClock::new(100, 1)));
        l.record_change("identify", "device", "", false).unwrap();
        l.record_change("fastboot oem unlock", "bootloader", "needed for live boot", true).unwrap();
        l.record_change("booted live OS into RAM", "RAM", "read from RAM-resident OS", true).unwrap();
        l.flush_to(&dir.path().join(LEDGER_FILE)).unwrap();
        fs::write(
            dir.path().join("userdata.img.meta"),
            serde_json::to_vec(&image(verified)).unwrap(),
        )
        .unwrap();
        dir
    }

    #[test]
    fn verified_case() {
        let dir = case(true);
        let r = generate_report(dir.path()).unwrap();
        assert_eq!(r.report.images.len(), 1);
        assert_eq!(r.report.mutating_changes().count(), 2);
        assert!(r.markdown.contains("match those of forensic image"));
        assert!(!r.markdown.contains("UNVERIFIED"));
        assert_eq!(r.report.created, 100);
    }

    #[test]
    fn unverified_banner() {
        let dir = case(false);
        let r = generate_report(dir.path()).unwrap();
        assert!(r.markdown.contains("## UNVERIFIED EVIDENCE"));
        assert_eq!(r.report.unverified_images().count(), 1);
    }

    #[test]
    fn deterministic_and_ignores_own_output() {
        let dir = case(true);
        let a = write_report(dir.path()).unwrap();
        let b = write_report(dir.path()).unwrap();
        assert_eq!(a.json, b.json);
        assert_eq!(a.markdown, b.markdown);
        let v: Value = serde_json::from_str(&a.json).unwrap();
        assert_eq!(v["images"][0]["device_md5"], "d41d8cd98f00b204e9800998ecf8427e");
    }

    #[test]
    fn empty_case() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(generate_report(dir.path()), Err(ReportError::EmptyCase(_))));
    }
}
