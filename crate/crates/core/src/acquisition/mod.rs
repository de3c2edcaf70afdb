//! Practitioner-side client: identify, unlock behind a wipe guard, boot the
//! live OS, stream partitions bit for bit and verify them against the
//! device's own digests. Every step lands in the change ledger.

mod channel;
mod replay;
mod session;

pub use channel::{FastbootClient, ServiceClient};
pub use replay::replay_ledger;
pub use session::{
    seal, verify_image_file, AcquiredImage, AcquisitionError, DeviceIdentity, Endpoints, Session,
    UnlockOutcome, VerifyOutcome, DEFAULT_FORWARD_PORT,
};
