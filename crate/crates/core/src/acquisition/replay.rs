use crate::device_sim::SimDevice;
use crate::reporting::ChangeLedgerEntry;

/// Re-issues every device-affecting fastboot command recorded in `entries`
/// against a copy of `initial`. Boot data is replayed as zero bytes of the
/// recorded length; the device only inspects the length.
pub fn replay_ledger(initial: &SimDevice, entries: &[ChangeLedgerEntry]) -> SimDevice {
    let mut device = initial.clone();
    for entry in entries.iter().filter(|e| e.mutating) {
        let Some(cmd) = &entry.device_command else { continue };
        if cmd.channel != "fastboot" {
            continue;
        }
        let data = cmd.data_len.map(|n| vec![0u8; n as usize]);
        device.handle_fastboot(&cmd.command, data.as_deref());
    }
    device
}
