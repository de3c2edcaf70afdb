//! Simulated Android device.
//!
//! [`SimDevice`] holds a [`DeviceProfile`] and answers the same two channels
//! a practitioner talks to on real hardware: a fastboot command channel and
//! an ADB-style service channel (`getprop`, `shell`, `forward`, `logcat`).
//! [`SimServer`] exposes both over TCP using the [`crate::protocol`] framing.

mod config;
mod device;
mod profile;
mod server;

pub use config::{BytesSpec, ConfigError, FileSpec, PartitionSpec, ProfileConfig};
pub use device::{
    credential_dump_lines, dump_escape, ServiceReply, SimDevice, SimError, DUMP_NULL, TAG_CREDDUMP, TAG_DALVIK,
    TAG_FASTBOOT,
};
pub use profile::{
    BootState, Bootloader, DeviceProfile, LogLine, Partition, StoredAccount, TransitFaults,
    DEFAULT_FLASH_NAME, DEFAULT_SDCARD_NAME,
};
pub use server::SimServer;
