//! Declarative JSON device profiles.
//!
//! ```json
//! {
//!   "model": "SimPhone",
//!   "android_version": "4.4.2",
//!   "boot_state": "fastboot_mode",
//!   "unlock_key": "5EC7A1B2C3D4E5F6",
//!   "userdata": { "kind": "archive", "files": [
//!       { "path": "data/com.dropbox.android/shared_prefs/prefs.xml",
//!         "content": { "text": "<map/>" } } ] }
//! }
//! ```

use super::device::SimDevice;
use super::profile::{BootState, Bootloader, DeviceProfile, Partition, StoredAccount, TransitFaults};
use crate::evidence_store::{FsEntry, SnapshotArchive};
use base64::Engine;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid profile JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid base64 content: {0}")]
    Base64(#[from] base64::DecodeError),
    #[error("invalid hex content: {0}")]
    Hex(#[from] hex::FromHexError),
    #[error("userdata does not parse as a snapshot archive: {0}")]
    Userdata(#[from] crate::evidence_store::ArchiveError),
    #[error("{0}")]
    Invalid(String),
}

/// Inline byte content.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BytesSpec {
    Text(String),
    Base64(String),
    Hex(String),
    Zeros(usize),
    /// Path relative to the profile file.
    File(PathBuf),
}

impl BytesSpec {
    pub fn resolve(&self, base: &Path) -> Result<Vec<u8>, ConfigError> {
        Ok(match self {
            BytesSpec::Text(s) => s.as_bytes().to_vec(),
            BytesSpec::Base64(s) => base64::engine::general_purpose::STANDARD.decode(s)?,
            BytesSpec::Hex(s) => hex::decode(s)?,
            BytesSpec::Zeros(n) => vec![0; *n],
            BytesSpec::File(p) => {
                let path = base.join(p);
                std::fs::read(&path).map_err(|source| ConfigError::Io { path, source })?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileSpec {
    pub path: String,
    #[serde(default)]
    pub mtime: u64,
    /// Directory entry when true; `content` is then ignored.
    #[serde(default)]
    pub dir: bool,
    #[serde(default)]
    pub content: Option<BytesSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionSpec {
    Archive {
        #[serde(default)]
        files: Vec<FileSpec>,
        #[serde(default)]
        slack: Option<BytesSpec>,
        /// Add directory entries for missing ancestors.
        #[serde(default = "yes")]
        parent_dirs: bool,
    },
    Raw {
        content: BytesSpec,
    },
}

fn yes() -> bool {
    true
}

impl PartitionSpec {
    pub fn build(&self, base: &Path) -> Result<Vec<u8>, ConfigError> {
        match self {
            PartitionSpec::Raw { content } => content.resolve(base),
            PartitionSpec::Archive {
                files,
                slack,
                parent_dirs,
            } => {
                let mut entries = Vec::with_capacity(files.len());
                for f in files {
                    entries.push(if f.dir {
                        FsEntry::dir(f.path.clone(), f.mtime)
                    } else {
                        let data = match &f.content {
                            Some(c) => c.resolve(base)?,
                            None => Vec::new(),
                        };
                        FsEntry::file(f.path.clone(), f.mtime, data)
                    });
                }
                let slack = match slack {
                    Some(s) => s.resolve(base)?,
                    None => Vec::new(),
                };
                let mut archive = SnapshotArchive::new(entries, slack)?;
                if *parent_dirs {
                    archive.ensure_parent_dirs(0);
                }
                Ok(archive.serialize())
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileConfig {
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default)]
    pub android_version: Option<String>,
    #[serde(default)]
    pub bootloader_version: Option<String>,
    #[serde(default)]
    pub boot_state: Option<BootState>,
    #[serde(default)]
    pub bootloader_unlocked: bool,
    #[serde(default)]
    pub unlock_key: Option<String>,
    #[serde(default)]
    pub unlock_challenge: Option<String>,
    #[serde(default)]
    pub wipe_on_unlock: bool,
    #[serde(default)]
    pub wipe_bypass_applied: bool,
    #[serde(default)]
    pub screen_lock_enabled: Option<bool>,
    #[serde(default)]
    pub encryption_enabled: bool,
    #[serde(default)]
    pub encryption_key_byte: Option<u8>,
    #[serde(default)]
    pub flash_name: Option<String>,
    #[serde(default)]
    pub sdcard_name: Option<String>,
    #[serde(default)]
    pub clock_start: Option<u64>,
    #[serde(default)]
    pub userdata: Option<PartitionSpec>,
    /// Other partitions keyed by name (`system`, `cache`, `boot`, `recovery`).
    #[serde(default)]
    pub partitions: BTreeMap<Partition, PartitionSpec>,
    #[serde(default)]
    pub sdcard: Option<PartitionSpec>,
    #[serde(default)]
    pub accounts: Vec<StoredAccount>,
    #[serde(default)]
    pub signature_check_bypassed: bool,
    /// Packages reported as StaleDexCacheError when the device starts.
    #[serde(default)]
    pub stale_dex_packages: Vec<String>,
    #[serde(default)]
    pub faults: TransitFaults,
}

pub const DEFAULT_CLOCK_START: u64 = 1_400_000_000;

impl ProfileConfig {
    pub fn load(path: &Path) -> Result<(Self, PathBuf), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg = serde_json::from_str(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn to_profile(&self, base: &Path) -> Result<DeviceProfile, ConfigError> {
        let mut p = DeviceProfile::default();
        if let Some(m) = &self.model {
            p.model = m.clone();
        }
        if let Some(v) = &self.android_version {
            p.android_version = v.clone();
        }
        if let Some(v) = &self.bootloader_version {
            p.bootloader_version = v.clone();
        }
        if let Some(s) = self.boot_state {
            p.boot_state = s;
        }
        if self.bootloader_unlocked {
            p.bootloader = Bootloader::Unlocked;
        }
        p.unlock_key = self.unlock_key.clone();
        if let Some(c) = &self.unlock_challenge {
            if c.len() != 16 || !c.bytes().all(|b| b.is_ascii_hexdigit()) {
                return Err(ConfigError::Invalid(format!(
                    "unlock_challenge must be 16 hex digits, got {c:?}"
                )));
            }
            p.unlock_challenge = c.clone();
        }
        p.wipe_on_unlock = self.wipe_on_unlock;
        p.wipe_bypass_applied = self.wipe_bypass_applied;
        if let Some(s) = self.screen_lock_enabled {
            p.screen_lock_enabled = s;
        }
        p.encryption_enabled = self.encryption_enabled;
        if let Some(k) = self.encryption_key_byte {
            p.encryption_key_byte = k;
        }
        if let Some(n) = &self.flash_name {
            p.flash_name = n.clone();
        }
        if let Some(n) = &self.sdcard_name {
            p.sdcard_name = n.clone();
        }
        for (part, spec) in &self.partitions {
            if *part == Partition::Userdata {
                return Err(ConfigError::Invalid(
                    "configure userdata through the `userdata` field".into(),
                ));
            }
            p.partitions.insert(*part, spec.build(base)?);
        }
        if let Some(spec) = &self.userdata {
            let bytes = spec.build(base)?;
            SnapshotArchive::parse(&bytes)?;
            p.partitions.insert(Partition::Userdata, bytes);
        }
        if let Some(spec) = &self.sdcard {
            p.sdcard = Some(spec.build(base)?);
        }
        let mut ids = std::collections::HashSet::new();
        for a in &self.accounts {
            if !ids.insert(a.id) {
                return Err(ConfigError::Invalid(format!("duplicate account id {}", a.id)));
            }
            let mut keys = std::collections::HashSet::new();
            if let Some((k, _)) = a.extras.iter().find(|(k, _)| !keys.insert(k)) {
                return Err(ConfigError::Invalid(format!(
                    "duplicate extras key {k:?} on account {}",
                    a.id
                )));
            }
        }
        p.accounts_store = self.accounts.clone();
        p.signature_check_bypassed = self.signature_check_bypassed;
        p.faults = self.faults.clone();
        Ok(p)
    }

    /// Builds the device and runs its start-up log activity: stale dex
    /// errors, then the credential dump when signature checks are bypassed.
    pub fn to_device(&self, base: &Path) -> Result<SimDevice, ConfigError> {
        let profile = self.to_profile(base)?;
        let mut dev = SimDevice::new(profile, self.clock_start.unwrap_or(DEFAULT_CLOCK_START));
        for pkg in &self.stale_dex_packages {
            dev.emit_stale_dex_error(pkg);
        }
        if self.signature_check_bypassed {
            dev.emit_credential_dump()
                .expect("signature check bypassed");
        }
        Ok(dev)
    }
}
