//! Command-line front end. Each subcommand maps onto one stage of the
//! workflow and runs against a case directory:
//!
//! ```text
//! caseforge simulate --profile phone.json
//! caseforge --case-dir case1 identify
//! caseforge --case-dir case1 unlock
//! caseforge --case-dir case1 boot-live liveos.img
//! caseforge --case-dir case1 collect --partition userdata
//! caseforge --case-dir case1 verify
//! caseforge --case-dir case1 examine accounts
//! caseforge --case-dir case1 report
//! ```
//!
//! Exit status is 0 on success, 1 when evidence integrity or the device
//! fails, and 2 for usage errors (including running a stage out of order).

use crate::accounts::{
    build_deodex_worklist, extract_accounts, parse_credential_dump, render_worklist, AccountsReport, ACCOUNTS_DB_PATH,
};
use crate::acquisition::{
    verify_image_file, AcquiredImage, AcquisitionError, DeviceIdentity, Endpoints, ServiceClient, Session,
    DEFAULT_FORWARD_PORT,
};
use crate::app_scan::enumerate_packages;
use crate::artifact_parsers::{database_report, prefs_report, sqlite_read};
use crate::clock::{Clock, SystemClock};
use crate::device_sim::{Partition, ProfileConfig, SimServer};
use crate::evidence_store::{identify_file_type, keyword_search, FileKind, Pattern, SnapshotArchive};
use crate::hashing::sha1_hex;
use crate::heapkit::{compute_dominators, oql_execute, parse_hprof, top_objects, OqlError, SortBy};
use crate::protocol::ServiceRequest;
use crate::reporting::{generate_report, write_report, ChangeDraft, Ledger, ReportError, CASE_FILE, LEDGER_FILE};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

pub const LOCK_FILE: &str = ".caseforge.lock";
const IDENTITY_FILE: &str = "identity.json";

#[derive(Debug, Parser)]
#[command(name = "caseforge", version, about = "Forensic acquisition and analysis for Android devices")]
struct Cli {
    /// Case directory; created on first use.
    #[arg(long, env = "CASEFORGE_CASE_DIR", global = true)]
    case_dir: Option<PathBuf>,
    /// Case identifier recorded when the case is created. Defaults to the
    /// directory name.
    #[arg(long, global = true)]
    case_id: Option<String>,
    #[arg(long, default_value = "127.0.0.1", global = true)]
    host: String,
    #[arg(long, default_value_t = 5037, global = true)]
    service_port: u16,
    #[arg(long, default_value_t = 5554, global = true)]
    fastboot_port: u16,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Serve a simulated device from a JSON profile until interrupted.
    Simulate {
        #[arg(long)]
        profile: PathBuf,
    },
    /// Read device model, version and lock state.
    Identify,
    /// Record preservation steps in the ledger.
    Preserve {
        #[command(subcommand)]
        action: PreserveCommand,
    },
    /// Unlock the bootloader, refusing if that would wipe userdata.
    Unlock {
        /// Manufacturer-issued unlock key.
        #[arg(long)]
        key: Option<String>,
        /// Proceed even if the device will erase userdata.
        #[arg(long)]
        allow_wipe: bool,
    },
    /// Download a live OS image and boot it into RAM.
    BootLive { image: PathBuf },
    /// Stream a partition (or `all`, or `sdcard`) into the case directory.
    Collect {
        #[arg(long)]
        partition: String,
        /// Local forwarding port; 0 picks a free one.
        #[arg(long, default_value_t = DEFAULT_FORWARD_PORT)]
        port: u16,
        /// Platform name of the internal flash; defaults to what `identify` read.
        #[arg(long)]
        flash_name: Option<String>,
        /// Platform name of the SD card controller.
        #[arg(long)]
        sdcard_name: Option<String>,
    },
    /// Re-hash every acquired image against its recorded digests.
    Verify,
    /// Examine the acquired userdata image.
    Examine(ExamineArgs),
    /// Analyze captured heap dumps.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCommand,
    },
    /// Read device logs.
    Monitor {
        #[command(subcommand)]
        what: MonitorCommand,
    },
    /// Write report.json and report.md.
    Report,
}

#[derive(Debug, Subcommand)]
enum PreserveCommand {
    /// Append a free-text note (isolation, photographs, seals).
    Note {
        #[arg(required = true, num_args = 1.., trailing_var_arg = true)]
        text: Vec<String>,
    },
}

#[derive(Debug, Args)]
struct ExamineArgs {
    /// Examine this image file instead of the case's verified userdata.img.
    #[arg(long, global = true)]
    offline_image: Option<PathBuf>,
    #[command(subcommand)]
    what: ExamineCommand,
}

#[derive(Debug, Subcommand)]
enum ExamineCommand {
    /// Enumerate installed packages and their storage (apps.json).
    Apps,
    /// Parse every shared_prefs file (prefs.json).
    Prefs,
    /// Dump every SQLite database (databases.json).
    Db,
    /// Join accounts.db tables (accounts.json).
    Accounts,
    /// Keyword and signature search over the raw image (search-hits.jsonl).
    Search {
        /// Text, or `hex:<digits>` for a byte signature. Repeatable.
        #[arg(long, required = true)]
        pattern: Vec<String>,
        /// Image to search.
        #[arg(long, default_value = "userdata")]
        image: String,
    },
}

#[derive(Debug, Subcommand)]
enum AnalyzeCommand {
    /// Dominator view and OQL over an HPROF file or a directory of them.
    Heap {
        path: PathBuf,
        #[arg(long)]
        oql: Option<String>,
        #[arg(long, default_value_t = 20)]
        top: usize,
        #[arg(long, default_value = "retained")]
        by: SortBy,
        /// Only list objects whose class starts with this prefix.
        #[arg(long)]
        class_prefix: Option<String>,
        /// Seconds between snapshots when `path` is a directory.
        #[arg(long)]
        interval: Option<f64>,
        /// Image the dumps relate to, when no image has been acquired.
        #[arg(long)]
        offline_image: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum MonitorCommand {
    /// Capture logcat, rebuild dumped credentials, and optionally list
    /// packages with stale dex caches.
    Logcat {
        #[arg(long)]
        deodex_worklist: bool,
        /// Read a saved log instead of the device.
        #[arg(long)]
        from: Option<PathBuf>,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Integrity(String),
    Failed(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Integrity(_) | CliError::Failed(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Integrity(m) => write!(f, "INTEGRITY FAILURE: {m}"),
            CliError::Failed(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<AcquisitionError> for CliError {
    fn from(e: AcquisitionError) -> Self {
        match e {
            AcquisitionError::EvidenceExists(_) => CliError::Usage(e.to_string()),
            AcquisitionError::HashMismatch(_) => CliError::Integrity(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

macro_rules! failed_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Failed(e.to_string())
            }
        }
    )*};
}
failed_from!(std::io::Error, serde_json::Error, crate::reporting::LedgerError);

type CliResult = Result<(), CliError>;

/// Contents of `case.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaseConfig {
    pub case_id: String,
    pub created: u64,
    pub service: String,
    pub fastboot: String,
}

struct LockGuard(PathBuf);

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

struct Case {
    dir: PathBuf,
    ledger: Ledger,
    clock: Arc<dyn Clock>,
    flash_name: Option<String>,
    sdcard_name: Option<String>,
    _lock: LockGuard,
}

impl Case {
    fn open(cli: &Cli, endpoints: Endpoints) -> Result<Case, CliError> {
        let dir = cli
            .case_dir
            .clone()
            .ok_or_else(|| CliError::Usage("no case directory: pass --case-dir or set CASEFORGE_CASE_DIR".into()))?;
        fs::create_dir_all(&dir)?;
        let lock_path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&lock_path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                return Err(CliError::Failed(format!(
                    "case directory {} is in use ({} exists; remove it if no other process is running)",
                    dir.display(),
                    lock_path.display()
                )))
            }
            Err(e) => return Err(e.into()),
        }
        let lock = LockGuard(lock_path);
        let clock: Arc<dyn Clock> = Arc::new(SystemClock);
        let case_path = dir.join(CASE_FILE);
        if !case_path.exists() {
            let config = CaseConfig {
                case_id: cli.case_id.clone().unwrap_or_else(|| {
                    dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "case".into())
                }),
                created: clock.now(),
                service: endpoints.service.to_string(),
                fastboot: endpoints.fastboot.to_string(),
            };
            let mut f = OpenOptions::new().write(true).create_new(true).open(&case_path)?;
            f.write_all(&serde_json::to_vec_pretty(&config)?)?;
        }
        let ledger = Ledger::load(&dir.join(LEDGER_FILE), clock.clone())?;
        Ok(Case { dir, ledger, clock, flash_name: None, sdcard_name: None, _lock: lock })
    }

    fn flush(&mut self) -> CliResult {
        self.ledger.flush_to(&self.dir.join(LEDGER_FILE))?;
        Ok(())
    }

    fn note(&mut self, draft: ChangeDraft) -> CliResult {
        self.ledger.record(draft)?;
        self.flush()
    }

    fn identity(&self) -> Option<DeviceIdentity> {
        let bytes = fs::read(self.dir.join(IDENTITY_FILE)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    /// Runs `f` on a session that borrows the case ledger; the ledger is
    /// flushed whether or not `f` succeeds.
    fn session<T>(
        &mut self,
        endpoints: Endpoints,
        f: impl FnOnce(&mut Session) -> Result<T, AcquisitionError>,
    ) -> Result<T, CliError> {
        let ledger = std::mem::replace(&mut self.ledger, Ledger::new(self.clock.clone()));
        let mut session = Session::new(endpoints, ledger);
        if let Some(id) = self.identity() {
            session.set_identity(id);
        }
        if let Some(name) = &self.flash_name {
            session.flash_name = name.clone();
        }
        if let Some(name) = &self.sdcard_name {
            session.sdcard_name = name.clone();
        }
        let result = f(&mut session);
        self.ledger = session.into_ledger();
        self.flush()?;
        result.map_err(CliError::from)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }

    fn metas(&self) -> Result<Vec<(PathBuf, AcquiredImage)>, CliError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.to_string_lossy().ends_with(".img.meta") {
                let meta: AcquiredImage = serde_json::from_slice(&fs::read(&path)?)?;
                out.push((path.with_extension(""), meta));
            }
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }

    fn require_verified_image(&self) -> CliResult {
        if self.metas()?.iter().any(|(_, m)| m.verified) {
            Ok(())
        } else {
            Err(CliError::Usage(
                "no verified image in this case yet; run `collect` first or pass --offline-image".into(),
            ))
        }
    }

    /// Bytes of the named image: the offline file if given, otherwise the
    /// case's own verified acquisition.
    fn evidence(&mut self, name: &str, offline: Option<&Path>) -> Result<(String, Vec<u8>), CliError> {
        if let Some(p) = offline {
            let bytes = fs::read(p).map_err(|e| CliError::Failed(format!("{}: {e}", p.display())))?;
            return Ok((p.display().to_string(), bytes));
        }
        self.require_verified_image()?;
        let image = self.dir.join(format!("{name}.img"));
        let meta = self.metas()?.into_iter().find(|(p, _)| *p == image).map(|(_, m)| m);
        match meta {
            Some(m) if m.verified && m.ciphertext => {
                Err(CliError::Failed(format!("{name}.img looks encrypted; it cannot be examined as a file tree")))
            }
            Some(m) if m.verified => Ok((image.display().to_string(), fs::read(&image)?)),
            Some(_) => Err(CliError::Integrity(format!("{name}.img failed verification; refusing to examine it"))),
            None => Err(CliError::Usage(format!("no acquired {name}.img in this case"))),
        }
    }

    fn archive(&mut self, name: &str, offline: Option<&Path>) -> Result<(String, SnapshotArchive), CliError> {
        let (label, bytes) = self.evidence(name, offline)?;
        let archive =
            SnapshotArchive::parse(&bytes).map_err(|e| CliError::Failed(format!("{label} is not a readable image: {e}")))?;
        Ok((label, archive))
    }

    /// Archive for an optional companion image (system, sdcard), if one
    /// was acquired and verified.
    fn optional_archive(&self, name: &str) -> Option<SnapshotArchive> {
        let image = self.dir.join(format!("{name}.img"));
        let (_, meta) = self.metas().ok()?.into_iter().find(|(p, _)| *p == image)?;
        if !meta.verified {
            return None;
        }
        SnapshotArchive::parse(&fs::read(image).ok()?).ok()
    }
}

fn resolve(host: &str, port: u16) -> Result<SocketAddr, CliError> {
    (host, port)
        .to_socket_addrs()
        .ok()
        .and_then(|mut a| a.next())
        .ok_or_else(|| CliError::Usage(format!("cannot resolve {host}:{port}")))
}

/// Parses `argv` (program name first) and runs one subcommand. Returns the
/// process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.code()
        }
    }
}

fn dispatch(cli: Cli) -> CliResult {
    let endpoints = Endpoints {
        service: resolve(&cli.host, cli.service_port)?,
        fastboot: resolve(&cli.host, cli.fastboot_port)?,
    };
    match &cli.command {
        Command::Simulate { profile } => return simulate(profile, endpoints),
        Command::Report => return report(&cli),
        _ => {}
    }
    let mut case = Case::open(&cli, endpoints)?;
    match cli.command {
        Command::Simulate { .. } | Command::Report => unreachable!(),
        Command::Identify => {
            let id = case.session(endpoints, |s| s.identify_device())?;
            case.write_json(IDENTITY_FILE, &id)?;
            println!(
                "{} (android {}), bootloader {}, via {}{}",
                id.model,
                id.android_version,
                id.bootloader_state,
                id.source,
                if id.encryption_suspected { ", encryption suspected" } else { "" }
            );
            Ok(())
        }
        Command::Preserve { action: PreserveCommand::Note { text } } => {
            let text = text.join(" ");
            case.note(ChangeDraft::new("preservation note", "device").justification(text))
        }
        Command::Unlock { key, allow_wipe } => {
            let outcome = case.session(endpoints, |s| s.unlock_bootloader(key.as_deref(), allow_wipe))?;
            println!("bootloader: {outcome:?}");
            Ok(())
        }
        Command::BootLive { image } => {
            let bytes = fs::read(&image).map_err(|e| CliError::Usage(format!("{}: {e}", image.display())))?;
            case.session(endpoints, |s| s.boot_live_os(&bytes))?;
            println!("live OS booted ({} bytes)", bytes.len());
            Ok(())
        }
        Command::Collect { partition, port, flash_name, sdcard_name } => {
            case.flash_name = flash_name;
            case.sdcard_name = sdcard_name;
            collect(&mut case, endpoints, &partition, port)
        }
        Command::Verify => verify(&mut case),
        Command::Examine(args) => examine(&mut case, args),
        Command::Analyze { what } => analyze(&mut case, what),
        Command::Monitor { what: MonitorCommand::Logcat { deodex_worklist, from } } => {
            monitor_logcat(&mut case, endpoints, deodex_worklist, from.as_deref())
        }
    }
}

fn simulate(profile: &Path, endpoints: Endpoints) -> CliResult {
    let (config, base) = ProfileConfig::load(profile).map_err(|e| CliError::Usage(e.to_string()))?;
    let device = config.to_device(&base).map_err(|e| CliError::Usage(e.to_string()))?;
    let server = SimServer::spawn(device, endpoints.service, endpoints.fastboot)?;
    println!("service channel on {}", server.service_addr());
    println!("fastboot channel on {}", server.fastboot_addr());
    server.wait();
    Ok(())
}

fn print_image(img: &AcquiredImage) {
    println!(
        "{:<10} {:>12} md5 {} sha1 {} {}",
        img.partition,
        img.size,
        img.local_md5,
        img.local_sha1,
        if img.verified { "VERIFIED" } else { "MISMATCH" }
    );
}

fn collect(case: &mut Case, endpoints: Endpoints, partition: &str, port: u16) -> CliResult {
    let dir = case.dir.clone();
    match partition {
        "sdcard" => {
            let img = case.session(endpoints, |s| s.acquire_sdcard(port, &dir))?;
            print_image(&img);
            Ok(())
        }
        "all" => {
            let mut mismatch = Vec::new();
            for p in Partition::ALL {
                match case.session(endpoints, |s| s.acquire_partition(p, port, &dir)) {
                    Ok(img) => print_image(&img),
                    Err(CliError::Integrity(m)) => {
                        eprintln!("{m}");
                        mismatch.push(p.name());
                    }
                    Err(CliError::Failed(m)) if m.starts_with("unknown partition") => {
                        eprintln!("skipping {}: {m}", p.name());
                    }
                    Err(e) => return Err(e),
                }
            }
            if mismatch.is_empty() {
                Ok(())
            } else {
                Err(CliError::Integrity(format!("digest mismatch on {}", mismatch.join(", "))))
            }
        }
        name => {
            let p: Partition = name
                .parse()
                .map_err(|e: String| CliError::Usage(format!("{e}; expected one of system, userdata, cache, boot, recovery, sdcard, all")))?;
            let img = case.session(endpoints, |s| s.acquire_partition(p, port, &dir))?;
            print_image(&img);
            Ok(())
        }
    }
}

fn verify(case: &mut Case) -> CliResult {
    let metas = case.metas()?;
    if metas.is_empty() {
        return Err(CliError::Usage("no acquired images to verify".into()));
    }
    let mut failed = Vec::new();
    for (image, _) in metas {
        let name = image.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let (outcome, meta) = match verify_image_file(&image) {
            Ok(v) => v,
            Err(e) => {
                println!("{name}: cannot verify: {e}");
                failed.push(name);
                continue;
            }
        };
        let ok = outcome.matches_meta && meta.verified;
        println!("{name}: md5 {} sha1 {} {}", outcome.md5, outcome.sha1, if ok { "OK" } else { "FAILED" });
        case.ledger.record(
            ChangeDraft::new("verify image", &name)
                .justification(format!("re-hashed local copy: {}", if ok { "matches" } else { "DOES NOT match" })),
        )?;
        if !ok {
            failed.push(name);
        }
    }
    case.flush()?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Integrity(format!("verification failed for {}", failed.join(", "))))
    }
}

fn examine(case: &mut Case, args: ExamineArgs) -> CliResult {
    let offline = args.offline_image.as_deref();
    let (what, output) = match args.what {
        ExamineCommand::Apps => {
            let (label, userdata) = case.archive("userdata", offline)?;
            let system = if offline.is_none() { case.optional_archive("system") } else { None };
            let scan = enumerate_packages(&userdata, system.as_ref()).map_err(|e| CliError::Failed(format!("{label}: {e}")))?;
            for w in &scan.warnings {
                eprintln!("warning: {}: {}", w.path, w.message);
            }
            println!("{} packages", scan.apps.len());
            ("apps", case.write_json("apps.json", &scan.apps)?)
        }
        ExamineCommand::Prefs => {
            let (_, userdata) = case.archive("userdata", offline)?;
            let reports: Vec<_> = userdata
                .entries()
                .iter()
                .filter(|e| !e.is_dir() && is_prefs_path(&e.path))
                .map(|e| prefs_report(&e.path, &e.data))
                .collect();
            println!("{} shared_prefs files", reports.len());
            ("prefs", case.write_json("prefs.json", &reports)?)
        }
        ExamineCommand::Db => {
            let (_, userdata) = case.archive("userdata", offline)?;
            let reports: Vec<_> = userdata
                .entries()
                .iter()
                .filter(|e| !e.is_dir() && identify_file_type(&e.data) == FileKind::Sqlite)
                .map(|e| database_report(&e.path, &e.data))
                .collect();
            println!("{} databases", reports.len());
            ("db", case.write_json("databases.json", &reports)?)
        }
        ExamineCommand::Accounts => {
            let (label, userdata) = case.archive("userdata", offline)?;
            let bytes = userdata
                .read_file(ACCOUNTS_DB_PATH)
                .map_err(|e| CliError::Failed(format!("{label}: {ACCOUNTS_DB_PATH}: {e}")))?;
            let tables = sqlite_read(bytes).map_err(|e| CliError::Failed(format!("{ACCOUNTS_DB_PATH}: {e}")))?;
            let extraction = extract_accounts(&tables).map_err(|e| CliError::Failed(format!("{ACCOUNTS_DB_PATH}: {e}")))?;
            let report = AccountsReport::from_database(ACCOUNTS_DB_PATH, extraction);
            println!("{} accounts, {} orphan rows", report.records.len(), report.orphans.len());
            ("accounts", case.write_json("accounts.json", &report)?)
        }
        ExamineCommand::Search { pattern, image } => {
            let patterns = pattern
                .iter()
                .map(|p| Pattern::parse(p))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let (_, bytes) = case.evidence(&image, offline)?;
            let hits = keyword_search(&bytes, &patterns).map_err(|e| CliError::Usage(e.to_string()))?;
            let mut text = String::new();
            for h in &hits {
                text.push_str(&serde_json::to_string(h)?);
                text.push('\n');
            }
            let path = case.dir.join("search-hits.jsonl");
            fs::write(&path, text)?;
            println!("{} hits", hits.len());
            ("search", path)
        }
    };
    let source = match offline {
        Some(p) => format!("offline image {}", p.display()),
        None => "acquired image copy".to_string(),
    };
    case.note(
        ChangeDraft::new(format!("examine {what}"), output.display().to_string())
            .justification(format!("read-only analysis of {source}")),
    )
}

/// `data/<package>/shared_prefs/<name>.xml`
fn is_prefs_path(path: &str) -> bool {
    let parts: Vec<&str> = path.split('/').collect();
    parts.len() == 4 && parts[0] == "data" && parts[2] == "shared_prefs" && parts[3].ends_with(".xml")
}

#[derive(Serialize)]
struct HeapSummary {
    file: String,
    sha1: String,
    size: u64,
    objects: usize,
    reachable: usize,
    unreachable: usize,
    total_retained: u64,
    by: &'static str,
    top: Vec<crate::heapkit::ObjectSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    query: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rows: Option<Vec<crate::heapkit::OqlRow>>,
}

fn analyze(case: &mut Case, what: AnalyzeCommand) -> CliResult {
    let AnalyzeCommand::Heap { path, oql, top, by, class_prefix, interval, offline_image } = what;
    if offline_image.is_none() {
        case.require_verified_image()?;
    }
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(&path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "hprof"))
            .collect();
        v.sort();
        v
    } else {
        vec![path.clone()]
    };
    if files.is_empty() {
        return Err(CliError::Usage(format!("no .hprof files in {}", path.display())));
    }
    if let Some(q) = &oql {
        crate::heapkit::parse_oql(q).map_err(|e| CliError::Usage(format!("OQL: {e}")))?;
    }
    let pause = interval.map(Duration::from_secs_f64);
    for (i, file) in files.iter().enumerate() {
        if i > 0 {
            if let Some(d) = pause {
                std::thread::sleep(d);
            }
        }
        let bytes = fs::read(file).map_err(|e| CliError::Usage(format!("{}: {e}", file.display())))?;
        let graph = parse_hprof(&bytes).map_err(|e| CliError::Failed(format!("{}: {e}", file.display())))?;
        let tree = compute_dominators(&graph);
        let rows = match &oql {
            Some(q) => Some(oql_execute(&graph, q).map_err(|e| match e {
                OqlError::Parse { .. } => CliError::Usage(format!("OQL: {e}")),
                _ => CliError::Failed(format!("OQL: {e}")),
            })?),
            None => None,
        };
        let summary = HeapSummary {
            file: file.display().to_string(),
            sha1: sha1_hex(&bytes),
            size: bytes.len() as u64,
            objects: graph.object_count(),
            reachable: tree.reachable().count(),
            unreachable: tree.unreachable().len(),
            total_retained: tree.total_retained(),
            by: match by {
                SortBy::Shallow => "shallow",
                SortBy::Retained => "retained",
            },
            top: top_objects(&graph, &tree, top, by, class_prefix.as_deref()),
            query: oql.clone(),
            rows,
        };
        let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "dump".into());
        let out = case.write_json(&format!("heap-{stem}.json"), &summary)?;
        println!(
            "{}: {} objects, retained total {}{}",
            file.display(),
            summary.objects,
            summary.total_retained,
            summary.rows.as_ref().map(|r| format!(", {} query rows", r.len())).unwrap_or_default()
        );
        case.note(
            ChangeDraft::new("analyze heap", out.display().to_string())
                .justification(format!("read-only analysis of {} (sha1 {})", file.display(), summary.sha1)),
        )?;
    }
    Ok(())
}

fn monitor_logcat(case: &mut Case, endpoints: Endpoints, deodex: bool, from: Option<&Path>) -> CliResult {
    let (text, source) = match from {
        Some(p) => (fs::read(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?, p.display().to_string()),
        None => {
            let bytes = ServiceClient::collect(endpoints.service, &ServiceRequest::Logcat)
                .map_err(|e| CliError::Failed(format!("logcat: {e}")))?
                .map_err(|r| CliError::Failed(format!("logcat refused: {r}")))?;
            let saved = save_new(&case.dir, "logcat", "txt", &bytes)?;
            (bytes, saved.display().to_string())
        }
    };
    let text = String::from_utf8_lossy(&text);
    let lines: Vec<&str> = text.lines().collect();
    let dump = parse_credential_dump(lines.iter().copied());
    for m in &dump.malformed {
        eprintln!("warning: line {}: {}", m.line, m.reason);
    }
    println!("{} log lines, {} accounts recovered", lines.len(), dump.records.len());
    let report = AccountsReport::from_dump(lines.len(), dump);
    case.write_json("accounts-logcat.json", &report)?;
    if deodex {
        let items = build_deodex_worklist(lines.iter().copied());
        fs::write(case.dir.join("deodex-worklist.txt"), render_worklist(&items))?;
        for i in &items {
            println!("deodex {} ({}x)", i.package, i.occurrences);
        }
    }
    case.note(ChangeDraft::new("read logcat", source).justification("read-only log capture"))
}

/// Writes `<stem>.<ext>`, or `<stem>-2.<ext>` and so on if taken; never
/// overwrites.
fn save_new(dir: &Path, stem: &str, ext: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    for n in 1.. {
        let name = if n == 1 { format!("{stem}.{ext}") } else { format!("{stem}-{n}.{ext}") };
        let path = dir.join(name);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                f.write_all(bytes)?;
                drop(f);
                crate::acquisition::seal(&path)?;
                return Ok(path);
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e.into()),
        }
    }
    unreachable!()
}

fn report(cli: &Cli) -> CliResult {
    let dir = cli
        .case_dir
        .clone()
        .ok_or_else(|| CliError::Usage("no case directory: pass --case-dir or set CASEFORGE_CASE_DIR".into()))?;
    let rendered = write_report(&dir).map_err(|e| match e {
        ReportError::EmptyCase(_) => CliError::Usage(e.to_string()),
        _ => CliError::Failed(e.to_string()),
    })?;
    let r = &rendered.report;
    println!(
        "report for {}: {} images, {} ledger entries ({} mutating)",
        r.case_id,
        r.images.len(),
        r.ledger.len(),
        r.mutating_changes().count()
    );
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    let unverified: Vec<_> = r.unverified_images().map(|i| i.image.partition.clone()).collect();
    if unverified.is_empty() {
        Ok(())
    } else {
        Err(CliError::Integrity(format!("unverified images: {}", unverified.join(", "))))
    }
}

/// Regenerates the report in memory and compares it with the files on disk.
pub fn report_is_current(case_dir: &Path) -> bool {
    match generate_report(case_dir) {
        Ok(r) => {
            fs::read_to_string(case_dir.join(crate::reporting::REPORT_JSON)).ok().as_deref() == Some(r.json.as_str())
                && fs::read_to_string(case_dir.join(crate::reporting::REPORT_MD)).ok().as_deref() == Some(r.markdown.as_str())
        }
        Err(_) => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["caseforge", "frobnicate"]), 2);
        assert_eq!(run(["caseforge", "collect"]), 2);
        assert_eq!(run(["caseforge", "--help"]), 0);
    }

    #[test]
    fn examine_before_collect_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let case = dir.path().join("c");
        let code = run(["caseforge", "--case-dir", case.to_str().unwrap(), "examine", "apps"]);
        assert_eq!(code, 2);
        assert!(case.join(CASE_FILE).exists());
        assert!(!case.join(LOCK_FILE).exists());
    }

    #[test]
    fn lock_excludes_second_process() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(LOCK_FILE), "1").unwrap();
        let code = run(["caseforge", "--case-dir", dir.path().to_str().unwrap(), "preserve", "note", "x"]);
        assert_eq!(code, 1);
    }

    #[test]
    fn note_lands_in_ledger_and_case_json_is_kept() {
        let dir = tempfile::tempdir().unwrap();
        let d = dir.path().to_str().unwrap();
        assert_eq!(run(["caseforge", "--case-dir", d, "--case-id", "A-1", "preserve", "note", "bagged", "in", "faraday"]), 0);
        let first = fs::read(dir.path().join(CASE_FILE)).unwrap();
        assert_eq!(run(["caseforge", "--case-dir", d, "--case-id", "B-2", "preserve", "note", "again"]), 0);
        assert_eq!(fs::read(dir.path().join(CASE_FILE)).unwrap(), first);
        let entries = crate::reporting::read_jsonl(&dir.path().join(LEDGER_FILE)).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].justification, "bagged in faraday");
    }

    #[test]
    fn prefs_paths() {
        assert!(is_prefs_path("data/com.a/shared_prefs/x.xml"));
        assert!(!is_prefs_path("data/com.a/shared_prefs/sub/x.xml"));
        assert!(!is_prefs_path("data/com.a/files/x.xml"));
    }
}
