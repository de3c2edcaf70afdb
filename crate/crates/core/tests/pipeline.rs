//! The command-line workflow end to end against a simulated phone.

mod common;

use caseforge::app_scan::AppRecord;
use caseforge::heapkit::{BasicType, FieldValue, HeapBuilder};
use caseforge::reporting::read_jsonl;
use common::sim::{live_profile, phone_archive, phone_profile, Bench, SLACK_RESIDUE};
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde_json::Value;
use std::fs;
use std::path::Path;

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn collected(seed: u64) -> (Bench, tempfile::TempDir, Vec<u8>) {
    let mut rng = StdRng::seed_from_u64(seed);
    let userdata = phone_archive(&mut rng, 128 * 1024).serialize();
    let bench = Bench::new(live_profile(userdata.clone()));
    let tmp = tempfile::tempdir().unwrap();
    let case = tmp.path().join("case");
    assert_eq!(bench.run(&case, &["collect", "--partition", "userdata", "--port", "0"]), 0);
    (bench, tmp, userdata)
}

#[test]
fn examine_writes_every_artifact() {
    let (bench, tmp, _) = collected(1);
    let case = tmp.path().join("case");
    for what in ["apps", "prefs", "db", "accounts"] {
        assert_eq!(bench.run(&case, &["examine", what]), 0, "examine {what}");
    }
    assert_eq!(bench.run(&case, &["examine", "search", "--pattern", "deleted-note", "--pattern", "hex:504b0304"]), 0);

    let apps: Vec<AppRecord> = serde_json::from_value(json(&case.join("apps.json"))).unwrap();
    let dropbox = apps.iter().find(|a| a.package == "com.dropbox.android").unwrap();
    assert_eq!(dropbox.external_dir.as_deref(), Some("data/media/0/Android/data/com.dropbox.android"));
    assert_eq!(dropbox.apk_path.as_deref(), Some("data/app/com.dropbox.android-1.apk"));
    assert!(apps.iter().any(|a| a.package == "com.example.notes"));

    let prefs = fs::read_to_string(case.join("prefs.json")).unwrap();
    assert!(prefs.contains("ya29.AbCdEfGhIjKlMnOpQrStUvWxYz0123456789abcd"));

    let accounts = json(&case.join("accounts.json"));
    assert_eq!(accounts["records"][0]["name"], "u@x.com");
    assert_eq!(accounts["orphans"].as_array().unwrap().len(), 1);

    let hits: Vec<Value> = fs::read_to_string(case.join("search-hits.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let residue = hits.iter().filter(|h| h["pattern"] == "deleted-note").collect::<Vec<_>>();
    assert_eq!(residue.len(), 1);
    assert_eq!(residue[0]["region"], "unallocated");
    let apk_hits: Vec<_> = hits.iter().filter(|h| h["pattern"] == "hex:504b0304").collect();
    assert_eq!(apk_hits.len(), 2);
    assert!(apk_hits.iter().all(|h| h["path"].as_str().unwrap().ends_with(".apk")));

    let ops: Vec<String> = read_jsonl(&case.join("ledger.jsonl")).unwrap().into_iter().map(|e| e.operation).collect();
    for what in ["apps", "prefs", "db", "accounts", "search"] {
        assert!(ops.iter().any(|o| o == &format!("examine {what}")), "{ops:?}");
    }
}

#[test]
fn evidence_is_never_overwritten() {
    let (bench, tmp, userdata) = collected(2);
    let case = tmp.path().join("case");
    assert_eq!(bench.run(&case, &["collect", "--partition", "userdata", "--port", "0"]), 2);
    assert_eq!(fs::read(case.join("userdata.img")).unwrap(), userdata);
}

#[test]
fn verify_catches_tampering_and_report_refuses() {
    let (bench, tmp, _) = collected(3);
    let case = tmp.path().join("case");
    assert_eq!(bench.run(&case, &["verify"]), 0);
    let img = case.join("userdata.img");
    let mut perms = fs::metadata(&img).unwrap().permissions();
    assert!(perms.readonly());
    #[allow(clippy::permissions_set_readonly_false)]
    perms.set_readonly(false);
    fs::set_permissions(&img, perms).unwrap();
    let mut bytes = fs::read(&img).unwrap();
    bytes[100] ^= 0x40;
    fs::write(&img, bytes).unwrap();
    assert_eq!(bench.run(&case, &["verify"]), 1);
    let last = read_jsonl(&case.join("ledger.jsonl")).unwrap().pop().unwrap();
    assert!(last.operation.starts_with("verify"), "{last:?}");
    // acquisition-time digests are intact, so the report still renders
    assert_eq!(bench.run(&case, &["report"]), 0);
}

#[test]
fn unverified_image_blocks_examination_and_report() {
    let mut rng = StdRng::seed_from_u64(4);
    let userdata = phone_archive(&mut rng, 64 * 1024).serialize();
    let bench = Bench::new(live_profile(userdata.clone()));
    bench.server.with_device(|d| d.profile_mut().faults.flip_bit = Some(12_345));
    let tmp = tempfile::tempdir().unwrap();
    let case = tmp.path().join("case");
    assert_eq!(bench.run(&case, &["collect", "--partition", "userdata", "--port", "0"]), 1);
    assert_eq!(bench.run(&case, &["examine", "apps"]), 2);
    assert!(!case.join("apps.json").exists());
    assert_eq!(bench.run(&case, &["report"]), 1);
}

#[test]
fn offline_image_needs_no_device() {
    let mut rng = StdRng::seed_from_u64(5);
    let tmp = tempfile::tempdir().unwrap();
    let image = tmp.path().join("seized.img");
    fs::write(&image, phone_archive(&mut rng, 32 * 1024).serialize()).unwrap();
    let bench = Bench::new(phone_profile(Vec::new()));
    let case = tmp.path().join("case");
    let code = bench.run(&case, &["examine", "--offline-image", image.to_str().unwrap(), "accounts"]);
    assert_eq!(code, 0);
    assert_eq!(json(&case.join("accounts.json"))["records"][0]["authtokens"][0][1], "tokA");
}

#[test]
fn saved_logcat_feeds_the_worklist() {
    let tmp = tempfile::tempdir().unwrap();
    let log = tmp.path().join("saved.txt");
    fs::write(
        &log,
        "1000 dalvikvm: StaleDexCacheError: /system/framework/services.jar (dex cache is stale)\n\
         1001 ActivityManager: start proc\n\
         1002 dalvikvm: StaleDexCacheError: /system/app/Settings.apk\n\
         1003 dalvikvm: StaleDexCacheError: /system/framework/services.jar (dex cache is stale)\n",
    )
    .unwrap();
    let bench = Bench::new(phone_profile(Vec::new()));
    let case = tmp.path().join("case");
    assert_eq!(bench.run(&case, &["monitor", "logcat", "--deodex-worklist", "--from", log.to_str().unwrap()]), 0);
    assert_eq!(fs::read_to_string(case.join("deodex-worklist.txt")).unwrap(), "services\nSettings\n");
    let last = read_jsonl(&case.join("ledger.jsonl")).unwrap().pop().unwrap();
    assert_eq!(last.target, log.display().to_string());
    assert!(!case.join("logcat.txt").exists());
}

#[test]
fn device_captures_are_numbered_not_overwritten() {
    let bench = Bench::new(live_profile(Vec::new()));
    bench.server.with_device(|d| d.emit_stale_dex_error("services"));
    let tmp = tempfile::tempdir().unwrap();
    let case = tmp.path().join("case");
    assert_eq!(bench.run(&case, &["monitor", "logcat"]), 0);
    let first = fs::read(case.join("logcat.txt")).unwrap();
    bench.server.with_device(|d| d.emit_stale_dex_error("framework"));
    assert_eq!(bench.run(&case, &["monitor", "logcat", "--deodex-worklist"]), 0);
    assert_eq!(fs::read(case.join("logcat.txt")).unwrap(), first);
    assert!(fs::read(case.join("logcat-2.txt")).unwrap().len() > first.len());
    assert_eq!(fs::read_to_string(case.join("deodex-worklist.txt")).unwrap(), "services\nframework\n");
}

#[test]
fn heap_summary_and_query() {
    let tmp = tempfile::tempdir().unwrap();
    let mut b = HeapBuilder::new(1);
    let cls = b.class("com.dropbox.Session", None, &[("token", BasicType::Object)]);
    let token = b.string("authentication: Bearer abc");
    let s = b.instance(cls, &[("token", FieldValue::Object(token))]);
    b.root(s);
    b.string("garbage");
    let dump = tmp.path().join("dropbox.hprof");
    fs::write(&dump, b.build()).unwrap();
    let bench = Bench::new(phone_profile(Vec::new()));
    let case = tmp.path().join("case");
    let q = r#"SELECT s FROM java.lang.String s WHERE contains(s, "authentication")"#;
    let args = ["analyze", "heap", dump.to_str().unwrap(), "--oql", q, "--top", "1"];
    assert_eq!(bench.run(&case, &args), 2, "no verified image yet");
    let image = tmp.path().join("seized.img");
    fs::write(&image, b"").unwrap();
    let args = [&args[..], &["--offline-image", image.to_str().unwrap()]].concat();
    assert_eq!(bench.run(&case, &args), 0);
    let out = json(&case.join("heap-dropbox.json"));
    assert_eq!(out["unreachable"], 2, "{out}");
    assert_eq!(out["top"].as_array().unwrap().len(), 1);
    assert_eq!(out["top"][0]["class"], "com.dropbox.Session");
    assert_eq!(out["rows"].as_array().unwrap().len(), 1);
    assert_eq!(out["rows"][0]["value"]["text"], "authentication: Bearer abc", "{out}");
}

#[test]
fn slack_residue_is_reported_as_unallocated() {
    let (bench, tmp, userdata) = collected(6);
    let case = tmp.path().join("case");
    let pattern = std::str::from_utf8(SLACK_RESIDUE).unwrap();
    assert_eq!(bench.run(&case, &["examine", "search", "--pattern", pattern]), 0);
    let hit: Value = serde_json::from_str(fs::read_to_string(case.join("search-hits.jsonl")).unwrap().trim()).unwrap();
    let at = hit["offset"].as_u64().unwrap() as usize;
    assert_eq!(&userdata[at..at + SLACK_RESIDUE.len()], SLACK_RESIDUE);
}
