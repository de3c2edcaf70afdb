use crate::clock::Clock;
use serde::{Deserialize, Serialize};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("mutating entry {operation:?} needs a justification")]
    MissingJustification { operation: String },
    #[error("ledger line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The exact command a ledger entry sent to the device, so the entry can be
/// replayed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceCommand {
    /// `fastboot` or `service`.
    pub channel: String,
    pub command: String,
    /// Size of a data phase (fastboot download), if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_len: Option<u64>,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeLedgerEntry {
    pub seq: u64,
    pub timestamp: u64,
    pub operation: String,
    pub target: String,
    pub justification: String,
    /// True exactly when the operation changed device state.
    pub mutating: bool,
    /// True when flash contents (not just RAM or bootloader flags) changed.
    #[serde(default)]
    pub flash_mutating: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub device_command: Option<DeviceCommand>,
}

/// Fields of an entry before it gets a sequence number and timestamp.
#[derive(Debug, Clone, Default)]
pub struct ChangeDraft {
    pub operation: String,
    pub target: String,
    pub justification: String,
    pub mutating: bool,
    pub flash_mutating: bool,
    pub device_command: Option<DeviceCommand>,
}

impl ChangeDraft {
    pub fn new(operation: impl Into<String>, target: impl Into<String>) -> Self {
        ChangeDraft {
            operation: operation.into(),
            target: target.into(),
            ..Default::default()
        }
    }

    pub fn justification(mut self, j: impl Into<String>) -> Self {
        self.justification = j.into();
        self
    }

    pub fn mutating(mut self, m: bool) -> Self {
        self.mutating = m;
        self
    }

    pub fn flash_mutating(mut self, m: bool) -> Self {
        self.flash_mutating = m;
        self
    }

    pub fn command(mut self, c: DeviceCommand) -> Self {
        self.device_command = Some(c);
        self
    }
}

/// Append-only record of every action taken against the evidence.
pub struct Ledger {
    entries: Vec<ChangeLedgerEntry>,
    persisted: usize,
    clock: Arc<dyn Clock>,
}

impl std::fmt::Debug for Ledger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ledger")
            .field("entries", &self.entries)
            .field("persisted", &self.persisted)
            .finish()
    }
}

impl Ledger {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        Ledger {
            entries: Vec::new(),
            persisted: 0,
            clock,
        }
    }

    pub fn entries(&self) -> &[ChangeLedgerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn record_change(
        &mut self,
        operation: &str,
        target: &str,
        justification: &str,
        mutating: bool,
    ) -> Result<&ChangeLedgerEntry, LedgerError> {
        self.record(
            ChangeDraft::new(operation, target)
                .justification(justification)
                .mutating(mutating),
        )
    }

    pub fn record(&mut self, draft: ChangeDraft) -> Result<&ChangeLedgerEntry, LedgerError> {
        if draft.mutating && draft.justification.trim().is_empty() {
            return Err(LedgerError::MissingJustification {
                operation: draft.operation,
            });
        }
        let seq = self.entries.last().map(|e| e.seq + 1).unwrap_or(1);
        self.entries.push(ChangeLedgerEntry {
            seq,
            timestamp: self.clock.now(),
            operation: draft.operation,
            target: draft.target,
            justification: draft.justification,
            mutating: draft.mutating,
            flash_mutating: draft.flash_mutating,
            device_command: draft.device_command,
        });
        Ok(self.entries.last().unwrap())
    }

    /// Loads `ledger.jsonl`; a missing file is an empty ledger.
    pub fn load(path: &Path, clock: Arc<dyn Clock>) -> Result<Self, LedgerError> {
        let mut ledger = Ledger::new(clock);
        if !path.exists() {
            return Ok(ledger);
        }
        ledger.entries = read_jsonl(path)?;
        ledger.persisted = ledger.entries.len();
        Ok(ledger)
    }

    /// Appends entries not yet written to `path`.
    pub fn flush_to(&mut self, path: &Path) -> Result<(), LedgerError> {
        if self.persisted == self.entries.len() {
            return Ok(());
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let mut w = BufWriter::new(file);
        for e in &self.entries[self.persisted..] {
            serde_json::to_writer(&mut w, e).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        self.persisted = self.entries.len();
        Ok(())
    }
}

pub fn read_jsonl(path: &Path) -> Result<Vec<ChangeLedgerEntry>, LedgerError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out: Vec<ChangeLedgerEntry> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ChangeLedgerEntry = serde_json::from_str(&line).map_err(|e| LedgerError::Corrupt {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if let Some(prev) = out.last() {
            if entry.seq <= prev.seq {
                return Err(LedgerError::Corrupt {
                    line: i + 1,
                    reason: format!("seq {} does not follow {}", entry.seq, prev.seq),
                });
            }
        }
        out.push(entry);
    }
    Ok(out)
}
