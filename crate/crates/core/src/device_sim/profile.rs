use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

pub const DEFAULT_FLASH_NAME: &str = "msm_sdcc.1";
pub const DEFAULT_SDCARD_NAME: &str = "s3c-sdhci.2";

/// The five flash partitions of a typical device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    System,
    #[serde(alias = "data")]
    Userdata,
    Cache,
    Boot,
    Recovery,
}

impl Partition {
    /// Listing order used when imaging everything.
    pub const ALL: [Partition; 5] = [
        Partition::System,
        Partition::Userdata,
        Partition::Cache,
        Partition::Boot,
        Partition::Recovery,
    ];

    /// Name under `/dev/block/platform/<flash>/by-name/`.
    pub fn name(self) -> &'static str {
        match self {
            Partition::Boot => "boot",
            Partition::System => "system",
            Partition::Recovery => "recovery",
            Partition::Userdata => "userdata",
            Partition::Cache => "cache",
        }
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Partition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "boot" => Ok(Partition::Boot),
            "system" => Ok(Partition::System),
            "recovery" => Ok(Partition::Recovery),
            "userdata" | "data" => Ok(Partition::Userdata),
            "cache" => Ok(Partition::Cache),
            other => Err(format!("unknown partition {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootState {
    StockLocked,
    StockUnlockedScreen,
    FastbootMode,
    LiveOs,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bootloader {
    Locked,
    UnlockPendingKey { challenge: String },
    Unlocked,
}

impl Bootloader {
    pub fn is_unlocked(&self) -> bool {
        matches!(self, Bootloader::Unlocked)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredAccount {
    pub id: i64,
    pub name: String,
    #[serde(rename = "type")]
    pub account_type: String,
    #[serde(default)]
    pub password: Option<String>,
    #[serde(default)]
    pub authtokens: Vec<(String, String)>,
    #[serde(default)]
    pub extras: Vec<(String, String)>,
}

impl StoredAccount {
    /// AccountManager semantics: an unused key yields nothing.
    pub fn extra(&self, key: &str) -> Option<&str> {
        self.extras
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogLine {
    pub timestamp: u64,
    pub tag: String,
    pub message: String,
}

impl LogLine {
    /// `<timestamp> <tag>: <message>\n`
    pub fn render(&self) -> String {
        format!("{} {}: {}\n", self.timestamp, self.tag, self.message)
    }

    /// Inverse of [`LogLine::render`] for a single line without its newline.
    pub fn parse(line: &str) -> Option<LogLine> {
        let line = line.strip_suffix('\n').unwrap_or(line);
        let (ts, rest) = line.split_once(' ')?;
        let timestamp = ts.parse().ok()?;
        let (tag, message) = rest.split_once(": ")?;
        if tag.is_empty() || tag.contains(' ') {
            return None;
        }
        Some(LogLine {
            timestamp,
            tag: tag.to_string(),
            message: message.to_string(),
        })
    }
}

/// Faults applied to forwarded streams while in transit; the partition
/// bytes themselves are never touched.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitFaults {
    /// Bit index (modulo stream length) to flip.
    #[serde(default)]
    pub flip_bit: Option<u64>,
    /// Drop the connection after this many payload bytes, without a terminator.
    #[serde(default)]
    pub truncate_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceProfile {
    pub model: String,
    pub android_version: String,
    pub bootloader_version: String,
    pub boot_state: BootState,
    pub bootloader: Bootloader,
    /// Key the manufacturer hands out; `None` means `oem unlock` needs no key.
    pub unlock_key: Option<String>,
    /// 16-hex challenge shown when a key is required.
    pub unlock_challenge: String,
    pub wipe_on_unlock: bool,
    pub wipe_bypass_applied: bool,
    pub screen_lock_enabled: bool,
    pub encryption_enabled: bool,
    pub encryption_key_byte: u8,
    pub flash_name: String,
    pub sdcard_name: String,
    pub partitions: BTreeMap<Partition, Vec<u8>>,
    pub sdcard: Option<Vec<u8>>,
    pub accounts_store: Vec<StoredAccount>,
    pub signature_check_bypassed: bool,
    pub logcat_log: Vec<LogLine>,
    pub faults: TransitFaults,
}

impl DeviceProfile {
    pub fn partition(&self, p: Partition) -> &[u8] {
        self.partitions.get(&p).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn userdata(&self) -> &[u8] {
        self.partition(Partition::Userdata)
    }

    pub fn partition_block_path(&self, p: Partition) -> String {
        format!("/dev/block/platform/{}/by-name/{}", self.flash_name, p.name())
    }

    pub fn sdcard_block_path(&self) -> String {
        format!("/dev/block/platform/{}/mmcblk1", self.sdcard_name)
    }
}

impl Default for DeviceProfile {
    fn default() -> Self {
        let mut partitions = BTreeMap::new();
        for p in Partition::ALL {
            partitions.insert(p, Vec::new());
        }
        partitions.insert(
            Partition::Userdata,
            crate::evidence_store::SnapshotArchive::empty().serialize(),
        );
        DeviceProfile {
            model: "SimPhone".into(),
            android_version: "4.4.2".into(),
            bootloader_version: "sim-1.0".into(),
            boot_state: BootState::FastbootMode,
            bootloader: Bootloader::Locked,
            unlock_key: None,
            unlock_challenge: "0123456789abcdef".into(),
            wipe_on_unlock: false,
            wipe_bypass_applied: false,
            screen_lock_enabled: true,
            encryption_enabled: false,
            encryption_key_byte: 0xA5,
            flash_name: DEFAULT_FLASH_NAME.into(),
            sdcard_name: DEFAULT_SDCARD_NAME.into(),
            partitions,
            sdcard: None,
            accounts_store: Vec::new(),
            signature_check_bypassed: false,
            logcat_log: Vec::new(),
            faults: TransitFaults::default(),
        }
    }
}
