//! Simulated phones and an in-process CLI driver.

use super::archive::random_bytes;
use caseforge::device_sim::{BootState, Bootloader, DeviceProfile, Partition, SimDevice, SimServer, StoredAccount};
use caseforge::evidence_store::{FsEntry, SnapshotArchive};
use rand::rngs::StdRng;
use rand::Rng;
use std::path::{Path, PathBuf};

pub fn sqlite_fixture(name: &str) -> Vec<u8> {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/sqlite").join(name);
    std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

pub const PREFS_XML: &str = r#"<?xml version='1.0' encoding='utf-8' standalone='yes' ?>
<map>
    <string name="user_email">u@x.com</string>
    <string name="session">{&quot;uid&quot;:42,&quot;token&quot;:&quot;ya29.AbCdEfGhIjKlMnOpQrStUvWxYz0123456789abcd&quot;}</string>
    <long name="last_sync" value="1400000123456" />
    <boolean name="logged_in" value="true" />
</map>
"#;

pub const SLACK_RESIDUE: &[u8] = b"deleted-note: meet at the docks";

/// A userdata tree with two apps, an external-storage area, accounts.db and
/// residue in slack, padded with filler to at least `min_size` bytes.
pub fn phone_archive(rng: &mut StdRng, min_size: usize) -> SnapshotArchive {
    let mut entries = vec![
        FsEntry::file("data/app/com.dropbox.android-1.apk", 10, b"PK\x03\x04dropbox".to_vec()),
        FsEntry::file("data/app/com.example.notes-2.apk", 10, b"PK\x03\x04notes".to_vec()),
        FsEntry::file("data/com.dropbox.android/shared_prefs/prefs.xml", 11, PREFS_XML.as_bytes().to_vec()),
        FsEntry::file("data/com.dropbox.android/databases/mixed.db", 12, sqlite_fixture("mixed.db")),
        FsEntry::dir("data/com.dropbox.android/cache", 12),
        FsEntry::file("data/com.example.notes/files/note.txt", 13, b"remember the token".to_vec()),
        FsEntry::dir("data/media/0/Android/data/com.dropbox.android", 14),
        FsEntry::file("system/users/0/accounts.db", 15, sqlite_fixture("accounts.db")),
    ];
    let mut archive = SnapshotArchive::new(std::mem::take(&mut entries), Vec::new()).unwrap();
    archive.ensure_parent_dirs(1);
    let mut entries = archive.entries().to_vec();
    let mut size = archive.serialize().len();
    let mut i = 0;
    while size + 4096 < min_size {
        let len = rng.gen_range(1..=(min_size - size).min(1 << 20));
        let data = random_bytes(rng, len, &[0, 1, 2, 0xfe, b'x']);
        entries.push(FsEntry::file(format!("data/com.example.notes/files/blob{i:04}"), 20, data));
        size += len + 64;
        i += 1;
    }
    let mut archive = SnapshotArchive::new(entries, Vec::new()).unwrap();
    let base = archive.serialize().len();
    let mut slack = random_bytes(rng, min_size.saturating_sub(base).max(SLACK_RESIDUE.len() + 64), &[0, 0x55]);
    let at = rng.gen_range(0..slack.len() - SLACK_RESIDUE.len());
    slack[at..at + SLACK_RESIDUE.len()].copy_from_slice(SLACK_RESIDUE);
    archive.set_slack(slack);
    archive
}

pub fn accounts() -> Vec<StoredAccount> {
    vec![StoredAccount {
        id: 1,
        name: "u@x.com".into(),
        account_type: "com.dropbox.android".into(),
        password: Some(String::new()),
        authtokens: vec![("oauth".into(), "tokA".into())],
        extras: vec![("refresh".into(), "rT".into())],
    }]
}

/// A locked phone in fastboot mode holding `userdata`.
pub fn phone_profile(userdata: Vec<u8>) -> DeviceProfile {
    let mut p = DeviceProfile::default();
    p.partitions.insert(Partition::Userdata, userdata);
    p.partitions.insert(Partition::System, b"system image bytes".repeat(100));
    p.partitions.insert(Partition::Boot, vec![0xB0; 4096]);
    p.partitions.insert(Partition::Cache, Vec::new());
    p.partitions.remove(&Partition::Recovery);
    p.accounts_store = accounts();
    p
}

/// Already running the live OS: for tests that only exercise streaming.
pub fn live_profile(userdata: Vec<u8>) -> DeviceProfile {
    let mut p = phone_profile(userdata);
    p.bootloader = Bootloader::Unlocked;
    p.boot_state = BootState::LiveOs;
    p
}

pub struct Bench {
    pub server: SimServer,
    pub initial: SimDevice,
}

impl Bench {
    pub fn new(profile: DeviceProfile) -> Bench {
        let initial = SimDevice::new(profile, 1_400_000_000);
        let server = SimServer::spawn_local(initial.clone()).unwrap();
        Bench { server, initial }
    }

    /// Runs the CLI against this device with `case` as the case directory.
    pub fn run(&self, case: &Path, args: &[&str]) -> i32 {
        let service = self.server.service_addr().port().to_string();
        let fastboot = self.server.fastboot_addr().port().to_string();
        let mut argv: Vec<String> = vec![
            "caseforge".into(),
            "--case-dir".into(),
            case.display().to_string(),
            "--service-port".into(),
            service,
            "--fastboot-port".into(),
            fastboot,
        ];
        argv.extend(args.iter().map(|s| s.to_string()));
        caseforge::cli::run(argv)
    }
}

pub fn live_os_image(dir: &Path) -> PathBuf {
    let p = dir.join("liveos.img");
    std::fs::write(&p, b"ANDROID!live-forensic-os".repeat(64)).unwrap();
    p
}
