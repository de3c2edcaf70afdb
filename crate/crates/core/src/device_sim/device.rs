use super::profile::{BootState, Bootloader, DeviceProfile, LogLine, Partition, StoredAccount};
use crate::clock::{Clock, StepClock};
use crate::hashing::{md5_hex, sha1_hex};
use crate::protocol::{FastbootResponse, ServiceRequest};
use std::borrow::Cow;
use thiserror::Error;

pub const TAG_FASTBOOT: &str = "fastboot";
pub const TAG_CREDDUMP: &str = "CREDDUMP";
pub const TAG_DALVIK: &str = "dalvikvm";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SimError {
    #[error("AccountManager refused: caller signature does not match")]
    SignatureCheckActive,
}

/// Outcome of a service-channel request: a payload stream, or a refusal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServiceReply {
    Stream(Vec<u8>),
    Fail(String),
}

/// A device profile plus the clock that stamps its log lines.
#[derive(Debug)]
pub struct SimDevice {
    profile: DeviceProfile,
    clock: StepClock,
}

impl Clone for SimDevice {
    fn clone(&self) -> Self {
        SimDevice {
            profile: self.profile.clone(),
            clock: StepClock::new(self.clock.peek(), 1),
        }
    }
}

impl SimDevice {
    /// `clock_start` seeds a clock that ticks one second per log line.
    pub fn new(profile: DeviceProfile, clock_start: u64) -> Self {
        SimDevice {
            profile,
            clock: StepClock::new(clock_start, 1),
        }
    }

    pub fn profile(&self) -> &DeviceProfile {
        &self.profile
    }

    pub fn profile_mut(&mut self) -> &mut DeviceProfile {
        &mut self.profile
    }

    pub fn into_profile(self) -> DeviceProfile {
        self.profile
    }

    /// Next timestamp the device clock will hand out.
    pub fn clock_position(&self) -> u64 {
        self.clock.peek()
    }

    fn log(&mut self, tag: &str, message: String) {
        let timestamp = self.clock.now();
        self.profile.logcat_log.push(LogLine {
            timestamp,
            tag: tag.to_string(),
            message,
        });
    }

    /// Bytes as read from the block device. Encrypted devices expose
    /// userdata as ciphertext.
    pub fn block_bytes(&self, p: Partition) -> Cow<'_, [u8]> {
        let raw = self.profile.partition(p);
        if p == Partition::Userdata && self.profile.encryption_enabled {
            let k = self.profile.encryption_key_byte;
            Cow::Owned(raw.iter().map(|b| b ^ k).collect())
        } else {
            Cow::Borrowed(raw)
        }
    }

    pub fn handle_fastboot(&mut self, command: &str, data: Option<&[u8]>) -> FastbootResponse {
        if self.profile.boot_state != BootState::FastbootMode {
            return FastbootResponse::fail("not in fastboot mode");
        }
        if let Some(var) = command.strip_prefix("getvar:") {
            return self.getvar(var);
        }
        if command == "oem unlock" {
            return self.oem_unlock(None);
        }
        if let Some(key) = command.strip_prefix("oem unlock:") {
            return self.oem_unlock(Some(key));
        }
        if let Some(len) = command.strip_prefix("download:") {
            return match u32::from_str_radix(len, 16) {
                Ok(0) => FastbootResponse::fail("empty download"),
                Ok(n) if len.len() == 8 => FastbootResponse::data(n),
                _ => FastbootResponse::fail("bad download size"),
            };
        }
        if command == "boot" {
            return self.boot(data);
        }
        FastbootResponse::fail(format!("unknown command {command:?}"))
    }

    fn getvar(&self, var: &str) -> FastbootResponse {
        let yn = |b: bool| if b { "yes" } else { "no" };
        let p = &self.profile;
        let value = match var {
            "product" => p.model.clone(),
            "version" => "0.4".to_string(),
            "version-bootloader" => p.bootloader_version.clone(),
            "unlocked" => yn(p.bootloader.is_unlocked()).to_string(),
            "secure" => "yes".to_string(),
            "wipe-on-unlock" => yn(p.wipe_on_unlock).to_string(),
            "wipe-bypass" => yn(p.wipe_bypass_applied).to_string(),
            "unlock-key-required" => yn(p.unlock_key.is_some()).to_string(),
            "unlock-state" => match p.bootloader {
                Bootloader::Locked => "locked",
                Bootloader::UnlockPendingKey { .. } => "pending",
                Bootloader::Unlocked => "unlocked",
            }
            .to_string(),
            _ => return FastbootResponse::fail(format!("unknown variable {var:?}")),
        };
        FastbootResponse::okay(value)
    }

    fn oem_unlock(&mut self, key: Option<&str>) -> FastbootResponse {
        if self.profile.bootloader.is_unlocked() {
            return FastbootResponse::okay("already unlocked");
        }
        match (&self.profile.unlock_key, key) {
            (None, _) => {}
            (Some(expected), Some(given)) if expected == given => {}
            (Some(_), Some(_)) => return FastbootResponse::fail("invalid key"),
            (Some(_), None) => {
                let challenge = self.profile.unlock_challenge.clone();
                let pending = Bootloader::UnlockPendingKey {
                    challenge: challenge.clone(),
                };
                if self.profile.bootloader != pending {
                    self.profile.bootloader = pending;
                    self.log(TAG_FASTBOOT, format!("unlock requested, challenge {challenge}"));
                }
                return FastbootResponse::fail(format!("need key: {challenge}"));
            }
        }
        self.profile.bootloader = Bootloader::Unlocked;
        self.log(TAG_FASTBOOT, "bootloader unlocked".into());
        if self.profile.wipe_on_unlock && !self.profile.wipe_bypass_applied {
            if let Some(ud) = self.profile.partitions.get_mut(&Partition::Userdata) {
                ud.iter_mut().for_each(|b| *b = 0);
            }
            self.log(TAG_FASTBOOT, "userdata wiped".into());
        }
        FastbootResponse::okay("")
    }

    fn boot(&mut self, image: Option<&[u8]>) -> FastbootResponse {
        let image = match image {
            None => return FastbootResponse::fail("no image downloaded"),
            Some([]) => return FastbootResponse::fail("empty image"),
            Some(img) => img,
        };
        if !self.profile.bootloader.is_unlocked() {
            return FastbootResponse::fail("bootloader locked");
        }
        self.profile.boot_state = BootState::LiveOs;
        self.log(
            TAG_FASTBOOT,
            format!("booted {} byte image into RAM", image.len()),
        );
        FastbootResponse::okay("")
    }

    fn resolve_block_path(&self, path: &str) -> Option<Cow<'_, [u8]>> {
        let path = path.strip_prefix('/').unwrap_or(path);
        let flash = format!("dev/block/platform/{}/by-name/", self.profile.flash_name);
        if let Some(name) = path.strip_prefix(&flash) {
            let part: Partition = name.parse().ok()?;
            // only partitions that physically exist on this device
            self.profile.partitions.get(&part)?;
            return Some(self.block_bytes(part));
        }
        if path == format!("dev/block/platform/{}/mmcblk1", self.profile.sdcard_name) {
            return self.profile.sdcard.as_deref().map(Cow::Borrowed);
        }
        None
    }

    /// Service channel. Never mutates partition bytes.
    pub fn handle_service(&self, request: &ServiceRequest) -> ServiceReply {
        let state = self.profile.boot_state;
        let allowed = match request {
            ServiceRequest::GetProp(_) | ServiceRequest::Logcat => {
                matches!(state, BootState::LiveOs | BootState::StockUnlockedScreen)
            }
            ServiceRequest::Shell(_) | ServiceRequest::Forward(_) => state == BootState::LiveOs,
        };
        if !allowed {
            return ServiceReply::Fail(match state {
                BootState::StockLocked => "device unauthorized".into(),
                BootState::FastbootMode => "device offline".into(),
                _ => "not permitted in current state".into(),
            });
        }
        match request {
            ServiceRequest::GetProp(name) => ServiceReply::Stream(self.getprop(name).into_bytes()),
            ServiceRequest::Logcat => ServiceReply::Stream(
                self.profile
                    .logcat_log
                    .iter()
                    .map(LogLine::render)
                    .collect::<String>()
                    .into_bytes(),
            ),
            ServiceRequest::Forward(path) => match self.resolve_block_path(path) {
                Some(bytes) => ServiceReply::Stream(bytes.into_owned()),
                None if path.contains("/mmcblk1") => ServiceReply::Fail("no such device: sdcard absent".into()),
                None => ServiceReply::Fail("no such device".into()),
            },
            ServiceRequest::Shell(cmd) => self.shell(cmd),
        }
    }

    fn getprop(&self, name: &str) -> String {
        let p = &self.profile;
        match name {
            "ro.product.model" => p.model.clone(),
            "ro.build.version.release" => p.android_version.clone(),
            "ro.crypto.state" => if p.encryption_enabled { "encrypted" } else { "unencrypted" }.into(),
            "ro.boot.flash.locked" => if p.bootloader.is_unlocked() { "0" } else { "1" }.into(),
            "ro.boot.bootdevice" => p.flash_name.clone(),
            "ro.lockscreen.secure" => if p.screen_lock_enabled { "1" } else { "0" }.into(),
            _ => String::new(),
        }
    }

    fn shell(&self, cmd: &str) -> ServiceReply {
        let mut words = cmd.split_whitespace();
        let (tool, path) = match (words.next(), words.next(), words.next()) {
            (Some(t), Some(p), None) => (t, p),
            _ => return ServiceReply::Fail(format!("unsupported shell command {cmd:?}")),
        };
        let hash: fn(&[u8]) -> String = match tool {
            "md5sum" => md5_hex,
            "sha1sum" => sha1_hex,
            _ => return ServiceReply::Fail(format!("{tool}: not found")),
        };
        match self.resolve_block_path(path) {
            Some(bytes) => ServiceReply::Stream(format!("{}  {}\n", hash(&bytes), path).into_bytes()),
            None => ServiceReply::Fail(format!("{tool}: {path}: No such file or directory")),
        }
    }

    /// Models the injected app that asks AccountManager for every stored
    /// credential once signature checks are bypassed and logs them.
    pub fn emit_credential_dump(&mut self) -> Result<(), SimError> {
        if !self.profile.signature_check_bypassed {
            return Err(SimError::SignatureCheckActive);
        }
        let accounts = self.profile.accounts_store.clone();
        for a in &accounts {
            for line in credential_dump_lines(a) {
                self.log(TAG_CREDDUMP, line);
            }
        }
        Ok(())
    }

    pub fn emit_stale_dex_error(&mut self, package: &str) {
        self.log(
            TAG_DALVIK,
            format!("StaleDexCacheError: /system/framework/{package}.jar (dex cache is stale)"),
        );
    }
}

/// Percent-escapes everything outside `[A-Za-z0-9._~@+/:-]`. The literal
/// `(null)` can therefore never be produced by escaping and marks an absent
/// value.
pub fn dump_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b"._~@+/:-".contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

pub const DUMP_NULL: &str = "(null)";

/// Lines logged for one account: the account line, then one line per
/// authtoken and per extra.
pub fn credential_dump_lines(a: &StoredAccount) -> Vec<String> {
    let password = a
        .password
        .as_deref()
        .map(dump_escape)
        .unwrap_or_else(|| DUMP_NULL.to_string());
    let mut lines = vec![format!(
        "account id={} name={} type={} password={}",
        a.id,
        dump_escape(&a.name),
        dump_escape(&a.account_type),
        password
    )];
    for (t, tok) in &a.authtokens {
        lines.push(format!("authtoken type={} token={}", dump_escape(t), dump_escape(tok)));
    }
    for (k, v) in &a.extras {
        lines.push(format!("extra key={} value={}", dump_escape(k), dump_escape(v)));
    }
    lines
}
