//! Forensic evidence collection and analysis for Android devices.
//!
//! The crate follows the practitioner's workflow: identify and preserve the
//! device, unlock and boot a RAM-resident live OS, stream each partition
//! bit for bit while hashing it, examine the recovered app data and heap
//! dumps, and report every change made along the way.
//!
//! A simulated device ([`device_sim`]) speaks the same wire protocol as the
//! acquisition client, so the whole pipeline runs on a desk.

pub mod accounts;
pub mod acquisition;
pub mod app_scan;
pub mod artifact_parsers;
pub mod cli;
pub mod clock;
pub mod device_sim;
pub mod evidence_store;
pub mod hashing;
pub mod heapkit;
pub mod protocol;
pub mod reporting;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/wire-protocol.md")]
    mod wire_protocol {}
    #[doc = include_str!("../../../book/src/acquisition.md")]
    mod acquisition {}
    #[doc = include_str!("../../../book/src/search.md")]
    mod search {}
    #[doc = include_str!("../../../book/src/app-data.md")]
    mod app_data {}
    #[doc = include_str!("../../../book/src/accounts.md")]
    mod accounts {}
    #[doc = include_str!("../../../book/src/heap.md")]
    mod heap {}
    #[doc = include_str!("../../../book/src/ledger.md")]
    mod ledger {}
    #[doc = include_str!("../../../book/src/command-line.md")]
    mod command_line {}
}
