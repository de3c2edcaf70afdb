//! Installed-app enumeration over a userdata archive.
//!
//! Layout read from the userdata partition:
//!
//! | path | meaning |
//! |------|---------|
//! | `data/<package>/` | app private storage |
//! | `data/app/*.apk` | user-installed APKs |
//! | `data/media/0/Android/data/<package>/` | emulated external storage |
//!
//! A separate SD card archive, when present, holds `Android/data/<package>/`
//! at its root. System APKs live under `system/app/` on the system partition.

use crate::evidence_store::SnapshotArchive;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub const DATA_DIR: &str = "data";
pub const USER_APK_DIR: &str = "data/app";
pub const SYSTEM_APK_DIR: &str = "system/app";
pub const EMULATED_EXTERNAL: &str = "data/media/0";

/// Directories under `data/` that hold no app.
const RESERVED: &[&str] = &["app", "app-lib", "app-private", "app-asec", "dalvik-cache", "media", "system", "user"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AppScanError {
    #[error("archive has no data/ directory")]
    NoDataDirectory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    SharedPrefs,
    Databases,
    Files,
    Cache,
    Lib,
    Webview,
    Other,
}

impl Category {
    pub fn of_dir(name: &str) -> Category {
        match name {
            "shared_prefs" => Category::SharedPrefs,
            "databases" => Category::Databases,
            "files" => Category::Files,
            "cache" => Category::Cache,
            "lib" => Category::Lib,
            "app_webview" | "webview" => Category::Webview,
            _ => Category::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppRecord {
    pub package: String,
    pub private_dir: String,
    pub categories: BTreeSet<Category>,
    pub external_dir: Option<String>,
    pub apk_path: Option<String>,
    pub is_system_app: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanWarning {
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppScan {
    pub apps: Vec<AppRecord>,
    pub warnings: Vec<ScanWarning>,
}

/// Reverse-domain package name: two or more `[A-Za-z0-9_]+` labels joined by dots.
pub fn is_package_name(s: &str) -> bool {
    let labels: Vec<&str> = s.split('.').collect();
    labels.len() >= 2
        && labels
            .iter()
            .all(|l| !l.is_empty() && l.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_'))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApkOrigin {
    User,
    System,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApkRecord {
    pub package: String,
    pub apk_path: String,
    pub origin: ApkOrigin,
}

/// `com.example.appname-1.apk` -> `com.example.appname`.
pub fn apk_package(file_name: &str) -> &str {
    let stem = file_name.strip_suffix(".apk").unwrap_or(file_name);
    match stem.rsplit_once('-') {
        Some((pkg, n)) if !pkg.is_empty() && !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()) => pkg,
        _ => stem,
    }
}

fn apks_under(archive: &SnapshotArchive, root: &str, origin: ApkOrigin) -> Vec<ApkRecord> {
    archive
        .files_under(root)
        .filter(|e| e.path.ends_with(".apk"))
        .map(|e| {
            let rel = &e.path[root.len() + 1..];
            // newer layouts nest the APK in a per-package directory
            let name = match rel.split_once('/') {
                Some((dir, _)) => dir,
                None => rel,
            };
            ApkRecord {
                package: apk_package(name).to_string(),
                apk_path: e.path.clone(),
                origin,
            }
        })
        .collect()
}

/// Every APK under `data/app` and, when supplied, `system/app`.
pub fn collect_apks(userdata: &SnapshotArchive, system: Option<&SnapshotArchive>) -> Vec<ApkRecord> {
    let mut out = apks_under(userdata, USER_APK_DIR, ApkOrigin::User);
    if let Some(sys) = system {
        out.extend(apks_under(sys, SYSTEM_APK_DIR, ApkOrigin::System));
    }
    out
}

/// One record per `data/<package>` directory.
pub fn enumerate_packages(
    userdata: &SnapshotArchive,
    system: Option<&SnapshotArchive>,
) -> Result<AppScan, AppScanError> {
    if !userdata.is_dir(DATA_DIR) {
        return Err(AppScanError::NoDataDirectory);
    }
    let mut user_apks: BTreeMap<String, String> = BTreeMap::new();
    let mut system_pkgs = BTreeSet::new();
    for apk in collect_apks(userdata, system) {
        match apk.origin {
            ApkOrigin::User => {
                user_apks.entry(apk.package).or_insert(apk.apk_path);
            }
            ApkOrigin::System => {
                system_pkgs.insert(apk.package);
            }
        }
    }
    let external: BTreeMap<String, String> = map_external_storage(userdata, None)
        .into_iter()
        .map(|x| (x.package, x.external_dir))
        .collect();

    let mut scan = AppScan::default();
    for (name, is_dir) in userdata.children(DATA_DIR) {
        if !is_dir || RESERVED.contains(&name.as_str()) {
            continue;
        }
        let private_dir = format!("{DATA_DIR}/{name}");
        if !is_package_name(&name) {
            scan.warnings.push(ScanWarning {
                path: private_dir,
                message: "not a package name; skipped".into(),
            });
            continue;
        }
        let categories = userdata
            .children(&private_dir)
            .into_iter()
            .filter(|(_, d)| *d)
            .map(|(sub, _)| Category::of_dir(&sub))
            .collect();
        scan.apps.push(AppRecord {
            external_dir: external.get(&name).cloned(),
            apk_path: user_apks.get(&name).cloned(),
            is_system_app: system_pkgs.contains(&name),
            package: name,
            private_dir,
            categories,
        });
    }
    Ok(scan)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalDir {
    pub package: String,
    pub external_dir: String,
    /// No matching private directory: possibly left behind by an uninstalled app.
    pub orphan: bool,
}

fn private_packages(userdata: &SnapshotArchive) -> BTreeSet<String> {
    userdata
        .children(DATA_DIR)
        .into_iter()
        .filter(|(n, d)| *d && !RESERVED.contains(&n.as_str()) && is_package_name(n))
        .map(|(n, _)| n)
        .collect()
}

/// Pairs each `Android/data/<package>` directory with the app's private storage.
pub fn map_external_storage(userdata: &SnapshotArchive, sdcard: Option<&SnapshotArchive>) -> Vec<ExternalDir> {
    let private = private_packages(userdata);
    let mut out = Vec::new();
    let roots = [(Some(userdata), format!("{EMULATED_EXTERNAL}/Android/data")), (sdcard, "Android/data".to_string())];
    for (archive, root) in roots {
        let Some(archive) = archive else { continue };
        for (name, is_dir) in archive.children(&root) {
            if !is_dir {
                continue;
            }
            out.push(ExternalDir {
                orphan: !private.contains(&name),
                external_dir: format!("{root}/{name}"),
                package: name,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evidence_store::FsEntry;

    fn archive(paths: &[&str]) -> SnapshotArchive {
        let entries = paths
            .iter()
            .map(|p| match p.strip_suffix('/') {
                Some(d) => FsEntry::dir(d, 1),
                None => FsEntry::file(*p, 1, b"x".to_vec()),
            })
            .collect();
        let mut a = SnapshotArchive::new(entries, vec![]).unwrap();
        a.ensure_parent_dirs(1);
        a
    }

    #[test]
    fn dropbox_record() {
        let a = archive(&[
            "data/com.dropbox.android/shared_prefs/",
            "data/com.dropbox.android/databases/db.db",
            "data/com.dropbox.android/notes.txt",
        ]);
        let scan = enumerate_packages(&a, None).unwrap();
        assert_eq!(scan.apps.len(), 1);
        let r = &scan.apps[0];
        assert_eq!(r.package, "com.dropbox.android");
        assert_eq!(r.categories, BTreeSet::from([Category::SharedPrefs, Category::Databases]));
        assert_eq!(r.external_dir, None);
    }

    #[test]
    fn empty_and_missing_data() {
        assert!(enumerate_packages(&archive(&["data/"]), None).unwrap().apps.is_empty());
        assert_eq!(enumerate_packages(&archive(&["system/x"]), None), Err(AppScanError::NoDataDirectory));
    }

    #[test]
    fn junk_directory_warns() {
        let a = archive(&["data/not-a-package/", "data/com.ok.app/", "data/app/"]);
        let scan = enumerate_packages(&a, None).unwrap();
        assert_eq!(scan.apps.len(), 1);
        assert_eq!(scan.warnings.len(), 1);
        assert_eq!(scan.warnings[0].path, "data/not-a-package");
    }

    #[test]
    fn apks_and_system_flag() {
        let a = archive(&["data/app/com.example.appname-1.apk", "data/com.example.appname/files/", "data/com.android.phone/"]);
        let sys = archive(&["system/app/Phone.apk", "system/app/com.android.phone.apk"]);
        let apks = collect_apks(&a, Some(&sys));
        assert_eq!(apks[0].package, "com.example.appname");
        assert_eq!(apks[0].origin, ApkOrigin::User);
        assert!(apks.iter().any(|x| x.package == "Phone" && x.origin == ApkOrigin::System));
        let scan = enumerate_packages(&a, Some(&sys)).unwrap();
        let phone = scan.apps.iter().find(|r| r.package == "com.android.phone").unwrap();
        assert!(phone.is_system_app);
        let app = scan.apps.iter().find(|r| r.package == "com.example.appname").unwrap();
        assert_eq!(app.apk_path.as_deref(), Some("data/app/com.example.appname-1.apk"));
        assert!(collect_apks(&archive(&["data/"]), None).is_empty());
    }

    #[test]
    fn external_orphans() {
        let a = archive(&[
            "data/com.dropbox.android/cache/",
            "data/media/0/Android/data/com.dropbox.android/files/x",
            "data/media/0/Android/data/com.gone.app/",
        ]);
        let ext = map_external_storage(&a, None);
        assert_eq!(
            ext.iter().map(|x| (x.package.as_str(), x.orphan)).collect::<Vec<_>>(),
            [("com.dropbox.android", false), ("com.gone.app", true)]
        );
        let scan = enumerate_packages(&a, None).unwrap();
        assert_eq!(scan.apps[0].external_dir.as_deref(), Some("data/media/0/Android/data/com.dropbox.android"));
        assert!(map_external_storage(&archive(&["data/"]), None).is_empty());
        let sd = archive(&["Android/data/com.dropbox.android/"]);
        assert_eq!(map_external_storage(&archive(&["data/"]), Some(&sd))[0].external_dir, "Android/data/com.dropbox.android");
    }

    #[test]
    fn grammar() {
        assert!(is_package_name("com.example.appname"));
        assert!(is_package_name("a_1.b"));
        for bad in ["single", "a..b", ".a", "a.b-c", ""] {
            assert!(!is_package_name(bad), "{bad}");
        }
        assert_eq!(apk_package("x.y-12.apk"), "x.y");
        assert_eq!(apk_package("x.y-beta.apk"), "x.y-beta");
    }
}
