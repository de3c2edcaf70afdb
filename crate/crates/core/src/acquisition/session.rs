use super::channel::{FastbootClient, ServiceClient};
use crate::device_sim::{Partition, DEFAULT_FLASH_NAME, DEFAULT_SDCARD_NAME};
use crate::evidence_store::MAGIC;
use crate::hashing::{digest_reader, DualHasher};
use crate::protocol::{ProtocolError, ServiceRequest};
use crate::reporting::{ChangeDraft, DeviceCommand, Ledger, LedgerError};
use serde::{Deserialize, Serialize};
use std::fs::{File, OpenOptions};
use std::io::{self, BufWriter, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::thread;
use thiserror::Error;

pub const DEFAULT_FORWARD_PORT: u16 = 7000;

const UNLOCK_JUSTIFICATION: &str =
    "bootloader must be unlocked to boot the forensic live OS into RAM; flash contents are not modified";
const BOOT_JUSTIFICATION: &str =
    "live OS runs entirely from RAM so partitions can be read without booting the stock OS";

#[derive(Debug, Error)]
pub enum AcquisitionError {
    #[error("device unreachable: {0}")]
    ChannelUnavailable(String),
    #[error("unlock would wipe userdata and no bypass is confirmed; refusing (pass allow_wipe to override)")]
    WipeGuardTriggered,
    #[error("unlock key required, device challenge {challenge}")]
    NeedKey { challenge: String },
    #[error("device rejected the unlock key")]
    WrongKey,
    #[error("device refused: {0}")]
    Refused(String),
    #[error("live OS boot refused: {0}")]
    BootRefused(String),
    #[error("image transfer failed: {0}")]
    TransferFailed(String),
    #[error("stream for {0} ended before its terminator")]
    StreamTruncated(String),
    #[error("hash mismatch for {}: local md5 {} sha1 {}, device md5 {} sha1 {}",
        .0.partition, .0.local_md5, .0.local_sha1, .0.device_md5, .0.device_sha1)]
    HashMismatch(Box<AcquiredImage>),
    #[error("unknown partition or device: {0}")]
    UnknownPartition(String),
    #[error("refusing to overwrite existing evidence file {0}")]
    EvidenceExists(PathBuf),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, AcquisitionError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endpoints {
    pub service: SocketAddr,
    pub fastboot: SocketAddr,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceIdentity {
    pub model: String,
    pub android_version: String,
    pub bootloader_state: String,
    pub encryption_suspected: bool,
    pub screen_lock: bool,
    /// Channel the identity was read from.
    pub source: String,
    /// Platform name of the internal flash, when the device reports one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flash_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcquiredImage {
    pub partition: String,
    pub device_path: String,
    pub bytes_path: String,
    pub size: u64,
    pub local_md5: String,
    pub local_sha1: String,
    pub device_md5: String,
    pub device_sha1: String,
    pub verified: bool,
    /// Content looks encrypted; examination will not parse it as an archive.
    #[serde(default)]
    pub ciphertext: bool,
    pub acquired_at: u64,
}

impl AcquiredImage {
    pub fn digests_match(&self) -> bool {
        self.local_md5 == self.device_md5 && self.local_sha1 == self.device_sha1
    }

    pub fn meta_path(image_path: &Path) -> PathBuf {
        let mut s = image_path.as_os_str().to_owned();
        s.push(".meta");
        PathBuf::from(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnlockOutcome {
    Unlocked,
    /// Nothing was sent; the bootloader was already unlocked.
    AlreadyUnlocked,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifyOutcome {
    pub image: PathBuf,
    pub md5: String,
    pub sha1: String,
    pub size: u64,
    pub matches_meta: bool,
}

/// Marks a finished evidence file read-only.
pub fn seal(path: &Path) -> io::Result<()> {
    let mut perms = std::fs::metadata(path)?.permissions();
    perms.set_readonly(true);
    std::fs::set_permissions(path, perms)
}

/// Re-hashes an image file and checks it against its `.meta` record.
pub fn verify_image_file(image: &Path) -> Result<(VerifyOutcome, AcquiredImage)> {
    let meta: AcquiredImage = serde_json::from_slice(&std::fs::read(AcquiredImage::meta_path(image))?)
        .map_err(io::Error::from)?;
    let (d, size) = digest_reader(File::open(image)?)?;
    let matches_meta = size == meta.size && d.md5 == meta.device_md5 && d.sha1 == meta.device_sha1;
    Ok((
        VerifyOutcome {
            image: image.to_path_buf(),
            md5: d.md5,
            sha1: d.sha1,
            size,
            matches_meta,
        },
        meta,
    ))
}

/// One acquisition session against one device.
pub struct Session {
    endpoints: Endpoints,
    pub ledger: Ledger,
    pub flash_name: String,
    pub sdcard_name: String,
    identity: Option<DeviceIdentity>,
}

impl Session {
    pub fn new(endpoints: Endpoints, ledger: Ledger) -> Self {
        Session {
            endpoints,
            ledger,
            flash_name: DEFAULT_FLASH_NAME.to_string(),
            sdcard_name: DEFAULT_SDCARD_NAME.to_string(),
            identity: None,
        }
    }

    pub fn endpoints(&self) -> Endpoints {
        self.endpoints
    }

    pub fn identity(&self) -> Option<&DeviceIdentity> {
        self.identity.as_ref()
    }

    pub fn set_identity(&mut self, id: DeviceIdentity) {
        if let Some(name) = &id.flash_name {
            self.flash_name = name.clone();
        }
        self.identity = Some(id);
    }

    pub fn into_ledger(self) -> Ledger {
        self.ledger
    }

    fn fastboot(&self) -> Result<FastbootClient> {
        FastbootClient::connect(self.endpoints.fastboot)
            .map_err(|e| AcquisitionError::ChannelUnavailable(format!("fastboot: {e}")))
    }

    fn getprop(&self, name: &str) -> std::result::Result<Result<String>, String> {
        match ServiceClient::collect(self.endpoints.service, &ServiceRequest::GetProp(name.into())) {
            Ok(Ok(bytes)) => Ok(Ok(String::from_utf8_lossy(&bytes).trim().to_string())),
            Ok(Err(refusal)) => Err(refusal),
            Err(e) => Ok(Err(e.into())),
        }
    }

    /// Reads model and version over the service channel when the device
    /// allows it, otherwise falls back to fastboot variables.
    pub fn identify_device(&mut self) -> Result<DeviceIdentity> {
        let service = match self.getprop("ro.product.model") {
            Ok(Ok(model)) => {
                let prop = |s: &Self, n: &str| -> Result<String> {
                    s.getprop(n)
                        .map_err(AcquisitionError::Refused)
                        .and_then(|r| r)
                };
                let version = prop(self, "ro.build.version.release")?;
                let crypto = prop(self, "ro.crypto.state")?;
                let locked = prop(self, "ro.boot.flash.locked")?;
                let screen = prop(self, "ro.lockscreen.secure")?;
                let bootdevice = prop(self, "ro.boot.bootdevice")?;
                Some(DeviceIdentity {
                    model,
                    android_version: if version.is_empty() { "unknown".into() } else { version },
                    bootloader_state: if locked == "0" { "unlocked" } else { "locked" }.into(),
                    encryption_suspected: crypto == "encrypted",
                    screen_lock: screen == "1",
                    source: "service".into(),
                    flash_name: (!bootdevice.is_empty()).then_some(bootdevice),
                })
            }
            Ok(Err(_)) | Err(_) => None,
        };
        let identity = match service {
            Some(id) => id,
            None => self.identify_via_fastboot()?,
        };
        self.ledger.record(
            ChangeDraft::new("identify device", format!("{} via {}", identity.model, identity.source))
                .justification("read-only property queries"),
        )?;
        self.set_identity(identity.clone());
        Ok(identity)
    }

    fn identify_via_fastboot(&self) -> Result<DeviceIdentity> {
        let mut fb = self.fastboot()?;
        let product = fb.getvar("product")?.map_err(|reason| {
            AcquisitionError::ChannelUnavailable(format!("service refused and fastboot refused: {reason}"))
        })?;
        let unlocked = fb.getvar("unlocked")?.unwrap_or_default();
        Ok(DeviceIdentity {
            model: product,
            android_version: "unknown (locked)".into(),
            bootloader_state: if unlocked == "yes" { "unlocked" } else { "locked" }.into(),
            encryption_suspected: false,
            screen_lock: true,
            source: "fastboot".into(),
            flash_name: None,
        })
    }

    /// Unlocks the bootloader. Devices that wipe userdata on unlock are
    /// refused before any command is sent unless a bypass is in place or
    /// `allow_wipe` is set.
    pub fn unlock_bootloader(&mut self, unlock_key: Option<&str>, allow_wipe: bool) -> Result<UnlockOutcome> {
        let mut fb = self.fastboot()?;
        let var = |fb: &mut FastbootClient, v: &str| -> Result<String> {
            fb.getvar(v)?.map_err(AcquisitionError::Refused)
        };
        let state = var(&mut fb, "unlock-state")?;
        if state == "unlocked" {
            self.ledger.record(
                ChangeDraft::new("oem unlock skipped: already unlocked", "bootloader")
                    .justification("no command sent"),
            )?;
            return Ok(UnlockOutcome::AlreadyUnlocked);
        }
        let wipes = var(&mut fb, "wipe-on-unlock")? == "yes";
        let bypass = var(&mut fb, "wipe-bypass")? == "yes";
        let will_wipe = wipes && !bypass;
        if will_wipe && !allow_wipe {
            self.ledger.record(
                ChangeDraft::new("oem unlock refused by wipe guard", "bootloader").justification(
                    "device wipes userdata on unlock and no bypass is in place; no command sent",
                ),
            )?;
            return Err(AcquisitionError::WipeGuardTriggered);
        }
        let command = match unlock_key {
            Some(k) => format!("oem unlock:{k}"),
            None => "oem unlock".to_string(),
        };
        let response = fb.command(&command)?;
        let device_command = DeviceCommand {
            channel: "fastboot".into(),
            command: command.clone(),
            data_len: None,
            response: String::from_utf8_lossy(&response.to_bytes()).into_owned(),
        };
        let key_note = if unlock_key.is_some() { " (manufacturer key supplied)" } else { "" };
        if response.is_okay() {
            let justification = if will_wipe {
                format!("WIPE AUTHORIZED: practitioner allowed userdata erase on unlock; {UNLOCK_JUSTIFICATION}")
            } else {
                UNLOCK_JUSTIFICATION.to_string()
            };
            self.ledger.record(
                ChangeDraft::new(format!("fastboot oem unlock{key_note}"), "bootloader")
                    .justification(justification)
                    .mutating(true)
                    .flash_mutating(will_wipe)
                    .command(device_command),
            )?;
            return Ok(UnlockOutcome::Unlocked);
        }
        if let Some(challenge) = response.body.strip_prefix("need key: ") {
            self.ledger.record(
                ChangeDraft::new("fastboot oem unlock (key challenge issued)", "bootloader")
                    .justification("challenge needed to request the device-specific unlock key from the manufacturer")
                    .mutating(state == "locked")
                    .command(device_command),
            )?;
            return Err(AcquisitionError::NeedKey {
                challenge: challenge.to_string(),
            });
        }
        self.ledger.record(
            ChangeDraft::new(format!("fastboot oem unlock failed{key_note}"), "bootloader")
                .justification(format!("device answered {:?}", response.body))
                .command(device_command),
        )?;
        if response.body == "invalid key" {
            Err(AcquisitionError::WrongKey)
        } else {
            Err(AcquisitionError::Refused(response.body))
        }
    }

    /// Downloads `image` and boots it into RAM.
    pub fn boot_live_os(&mut self, image: &[u8]) -> Result<()> {
        let mut fb = self.fastboot()?;
        let sent = fb.download(image)?;
        if !sent.is_okay() {
            self.ledger.record(
                ChangeDraft::new("fastboot download failed", "RAM")
                    .justification(format!("device answered {:?}", sent.body)),
            )?;
            return Err(AcquisitionError::TransferFailed(sent.body));
        }
        let response = fb.command("boot")?;
        let device_command = DeviceCommand {
            channel: "fastboot".into(),
            command: "boot".into(),
            data_len: Some(image.len() as u64),
            response: String::from_utf8_lossy(&response.to_bytes()).into_owned(),
        };
        if !response.is_okay() {
            self.ledger.record(
                ChangeDraft::new("fastboot boot refused", "RAM")
                    .justification(format!("device answered {:?}", response.body))
                    .command(device_command),
            )?;
            return Err(AcquisitionError::BootRefused(response.body));
        }
        let sha1 = crate::hashing::sha1_hex(image);
        self.ledger.record(
            ChangeDraft::new("booted live OS into RAM", format!("liveos.img ({} bytes, sha1 {sha1})", image.len()))
                .justification(BOOT_JUSTIFICATION)
                .mutating(true)
                .command(device_command),
        )?;
        Ok(())
    }

    pub fn partition_device_path(&self, p: Partition) -> String {
        format!("/dev/block/platform/{}/by-name/{}", self.flash_name, p.name())
    }

    pub fn sdcard_device_path(&self) -> String {
        format!("/dev/block/platform/{}/mmcblk1", self.sdcard_name)
    }

    /// Streams one partition through a local TCP forward on `tcp_port`
    /// (0 picks a free port) into `<out_dir>/<partition>.img`.
    pub fn acquire_partition(&mut self, partition: Partition, tcp_port: u16, out_dir: &Path) -> Result<AcquiredImage> {
        let path = self.partition_device_path(partition);
        self.acquire(partition.name(), &path, tcp_port, out_dir)
    }

    pub fn acquire_sdcard(&mut self, tcp_port: u16, out_dir: &Path) -> Result<AcquiredImage> {
        let path = self.sdcard_device_path();
        self.acquire("sdcard", &path, tcp_port, out_dir)
    }

    fn acquire(&mut self, name: &str, device_path: &str, tcp_port: u16, out_dir: &Path) -> Result<AcquiredImage> {
        let image_path = out_dir.join(format!("{name}.img"));
        let meta_path = AcquiredImage::meta_path(&image_path);
        if image_path.exists() || meta_path.exists() {
            return Err(AcquisitionError::EvidenceExists(image_path));
        }
        let listener = TcpListener::bind(("127.0.0.1", tcp_port))?;
        let local_port = listener.local_addr()?.port();
        let forward_target = device_path.trim_start_matches('/').to_string();
        let service = self.endpoints.service;
        let (tx, rx) = mpsc::channel();
        let forwarder = thread::spawn(move || {
            let result = forward_once(listener, service, &forward_target);
            let _ = tx.send(result);
        });

        let mut file = BufWriter::new(OpenOptions::new().write(true).create_new(true).open(&image_path)?);
        let mut hasher = DualHasher::new();
        let mut conn = TcpStream::connect(("127.0.0.1", local_port))?;
        let mut buf = vec![0u8; 1 << 16];
        loop {
            let n = match conn.read(&mut buf) {
                Ok(0) => break,
                Ok(n) => n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => return Err(e.into()),
            };
            hasher.update(&buf[..n]);
            file.write_all(&buf[..n])?;
        }
        file.flush()?;
        drop(file);
        let _ = forwarder.join();
        let forwarded = rx
            .recv()
            .unwrap_or(Err(ForwardError::Protocol(ProtocolError::MissingTerminator)));
        match forwarded {
            Ok(_) => {}
            Err(ForwardError::Refused(reason)) => {
                std::fs::remove_file(&image_path)?;
                self.ledger.record(
                    ChangeDraft::new(format!("adb forward tcp:{tcp_port} dev:{device_path}"), name)
                        .justification(format!("device refused: {reason}")),
                )?;
                return Err(AcquisitionError::UnknownPartition(format!("{name} ({reason})")));
            }
            Err(ForwardError::Protocol(e)) => {
                let partial = out_dir.join(format!("{name}.img.partial"));
                std::fs::rename(&image_path, &partial)?;
                self.ledger.record(
                    ChangeDraft::new(format!("adb forward tcp:{tcp_port} dev:{device_path}"), name)
                        .justification(format!("stream truncated ({e}); partial bytes kept at {}", partial.display())),
                )?;
                return Err(AcquisitionError::StreamTruncated(name.to_string()));
            }
        }
        let streamed = hasher.finish();
        self.ledger.record(
            ChangeDraft::new(format!("adb forward tcp:{tcp_port} dev:{device_path}"), name)
                .justification(format!("read-only bit-for-bit stream to {}", image_path.display())),
        )?;

        // second pass over the written file
        let (on_disk, size) = digest_reader(File::open(&image_path)?)?;
        if on_disk != streamed {
            return Err(AcquisitionError::Io(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("{} changed on disk after writing", image_path.display()),
            )));
        }

        let device_md5 = self.device_digest("md5sum", device_path, 32)?;
        let device_sha1 = self.device_digest("sha1sum", device_path, 40)?;
        self.ledger.record(
            ChangeDraft::new(format!("md5sum + sha1sum {device_path}"), name)
                .justification("device-side digests for comparison with the local image"),
        )?;

        let ciphertext = self.identity.as_ref().is_some_and(|i| i.encryption_suspected)
            || (name == Partition::Userdata.name() && size > 0 && !starts_with_magic(&image_path)?);
        let image = AcquiredImage {
            partition: name.to_string(),
            device_path: device_path.to_string(),
            bytes_path: image_path.display().to_string(),
            size,
            verified: on_disk.md5 == device_md5 && on_disk.sha1 == device_sha1,
            local_md5: on_disk.md5,
            local_sha1: on_disk.sha1,
            device_md5,
            device_sha1,
            ciphertext,
            acquired_at: self.ledger.entries().last().map(|e| e.timestamp).unwrap_or(0),
        };
        let meta = serde_json::to_vec_pretty(&image).map_err(io::Error::from)?;
        OpenOptions::new().write(true).create_new(true).open(&meta_path)?.write_all(&meta)?;
        seal(&image_path)?;
        seal(&meta_path)?;
        if image.verified {
            Ok(image)
        } else {
            Err(AcquisitionError::HashMismatch(Box::new(image)))
        }
    }

    fn device_digest(&self, tool: &str, device_path: &str, hex_len: usize) -> Result<String> {
        let req = ServiceRequest::Shell(format!("{tool} {device_path}"));
        let out = ServiceClient::collect(self.endpoints.service, &req)?.map_err(AcquisitionError::Refused)?;
        let text = String::from_utf8_lossy(&out);
        let digest = text.split_whitespace().next().unwrap_or("");
        if digest.len() != hex_len || !digest.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(ProtocolError::Malformed(format!("unexpected {tool} output {text:?}")).into());
        }
        Ok(digest.to_ascii_lowercase())
    }
}

fn starts_with_magic(path: &Path) -> io::Result<bool> {
    let mut head = [0u8; 8];
    let mut f = File::open(path)?;
    let mut got = 0;
    while got < head.len() {
        match f.read(&mut head[got..])? {
            0 => break,
            n => got += n,
        }
    }
    Ok(got == head.len() && &head == MAGIC)
}

enum ForwardError {
    Refused(String),
    Protocol(ProtocolError),
}

impl From<ProtocolError> for ForwardError {
    fn from(e: ProtocolError) -> Self {
        ForwardError::Protocol(e)
    }
}

impl From<io::Error> for ForwardError {
    fn from(e: io::Error) -> Self {
        ForwardError::Protocol(e.into())
    }
}

/// Host side of `adb forward`: accept one local connection and relay the
/// device stream's payload bytes into it.
fn forward_once(listener: TcpListener, service: SocketAddr, target: &str) -> std::result::Result<u64, ForwardError> {
    let (local, _) = listener.accept()?;
    let mut local = BufWriter::with_capacity(1 << 16, local);
    match ServiceClient::open(service, &ServiceRequest::Forward(target.to_string()))? {
        ServiceClient::Refused(reason) => Err(ForwardError::Refused(reason)),
        ServiceClient::Open(mut reader) => {
            let total = reader.for_each_payload(|p| {
                local.write_all(p)?;
                Ok(())
            })?;
            local.flush()?;
            Ok(total)
        }
    }
}
