//! Change ledger and case reports.
//!
//! The ledger is the running account of every action taken against the
//! device; the report gathers it together with image digests and
//! examination findings into one deterministic document per case.

mod ledger;
mod report;

pub use ledger::{read_jsonl, ChangeDraft, ChangeLedgerEntry, DeviceCommand, Ledger, LedgerError};
pub use report::{
    generate_report, write_report, CaseInfo, CaseReport, ImageSection, RenderedReport, ReportError,
    CASE_FILE, LEDGER_FILE, REPORT_JSON, REPORT_MD,
};
