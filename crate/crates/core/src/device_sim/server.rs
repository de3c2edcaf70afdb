use super::device::{ServiceReply, SimDevice};
use super::profile::{DeviceProfile, TransitFaults};
use crate::protocol::{self, FastbootResponse, FrameReader, ServiceRequest, MAX_PAYLOAD};
use std::io::{self, BufWriter, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::Duration;

const IO_TIMEOUT: Duration = Duration::from_secs(60);

/// Serves a [`SimDevice`] on a service port and a fastboot port.
///
/// Requests are applied one at a time under a lock; forwarded partition
/// bytes are copied out first and streamed without holding it.
pub struct SimServer {
    service_addr: SocketAddr,
    fastboot_addr: SocketAddr,
    device: Arc<Mutex<SimDevice>>,
    shutdown: Arc<AtomicBool>,
    acceptors: Vec<JoinHandle<()>>,
}

impl SimServer {
    pub fn spawn(device: SimDevice, service: SocketAddr, fastboot: SocketAddr) -> io::Result<Self> {
        let service_l = TcpListener::bind(service)?;
        let fastboot_l = TcpListener::bind(fastboot)?;
        let service_addr = service_l.local_addr()?;
        let fastboot_addr = fastboot_l.local_addr()?;
        let device = Arc::new(Mutex::new(device));
        let shutdown = Arc::new(AtomicBool::new(false));
        let acceptors = vec![
            accept_loop(service_l, device.clone(), shutdown.clone(), serve_service),
            accept_loop(fastboot_l, device.clone(), shutdown.clone(), serve_fastboot),
        ];
        Ok(SimServer {
            service_addr,
            fastboot_addr,
            device,
            shutdown,
            acceptors,
        })
    }

    /// Both channels on ephemeral loopback ports.
    pub fn spawn_local(device: SimDevice) -> io::Result<Self> {
        let any: SocketAddr = "127.0.0.1:0".parse().unwrap();
        Self::spawn(device, any, any)
    }

    pub fn service_addr(&self) -> SocketAddr {
        self.service_addr
    }

    pub fn fastboot_addr(&self) -> SocketAddr {
        self.fastboot_addr
    }

    /// Immutable copy of the current device state.
    pub fn snapshot(&self) -> DeviceProfile {
        lock(&self.device).profile().clone()
    }

    pub fn device_clone(&self) -> SimDevice {
        lock(&self.device).clone()
    }

    pub fn with_device<T>(&self, f: impl FnOnce(&mut SimDevice) -> T) -> T {
        f(&mut lock(&self.device))
    }

    /// Blocks until the server is shut down from another thread.
    pub fn wait(mut self) {
        for h in self.acceptors.drain(..) {
            let _ = h.join();
        }
    }

    pub fn shutdown(&mut self) {
        if self.shutdown.swap(true, Ordering::SeqCst) {
            return;
        }
        // unblock accept()
        let _ = TcpStream::connect(self.service_addr);
        let _ = TcpStream::connect(self.fastboot_addr);
        for h in self.acceptors.drain(..) {
            let _ = h.join();
        }
    }
}

impl Drop for SimServer {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn lock(device: &Mutex<SimDevice>) -> MutexGuard<'_, SimDevice> {
    // a panicking handler thread must not take the whole simulator down
    device.lock().unwrap_or_else(|e| e.into_inner())
}

type Handler = fn(TcpStream, &Mutex<SimDevice>) -> protocol::Result<()>;

fn accept_loop(
    listener: TcpListener,
    device: Arc<Mutex<SimDevice>>,
    shutdown: Arc<AtomicBool>,
    handler: Handler,
) -> JoinHandle<()> {
    thread::spawn(move || {
        for conn in listener.incoming() {
            if shutdown.load(Ordering::SeqCst) {
                break;
            }
            let Ok(stream) = conn else { continue };
            let device = device.clone();
            thread::spawn(move || {
                let _ = stream.set_read_timeout(Some(IO_TIMEOUT));
                let _ = stream.set_write_timeout(Some(IO_TIMEOUT));
                let _ = handler(stream, &device);
            });
        }
    })
}

fn serve_service(stream: TcpStream, device: &Mutex<SimDevice>) -> protocol::Result<()> {
    let mut reader = FrameReader::new(stream.try_clone()?);
    let mut out = BufWriter::with_capacity(MAX_PAYLOAD + 4, stream);
    let request = reader.expect_frame()?;
    let request = match ServiceRequest::from_bytes(&request.payload) {
        Ok(r) => r,
        Err(e) => {
            protocol::write_frame(&mut out, format!("FAIL{e}").as_bytes())?;
            out.flush()?;
            return Ok(());
        }
    };
    let (reply, faults) = {
        let dev = lock(device);
        (dev.handle_service(&request), dev.profile().faults.clone())
    };
    match reply {
        ServiceReply::Fail(reason) => {
            protocol::write_frame(&mut out, format!("FAIL{reason}").as_bytes())?;
        }
        ServiceReply::Stream(mut data) => {
            protocol::write_frame(&mut out, b"OKAY")?;
            let truncate = if matches!(request, ServiceRequest::Forward(_)) {
                apply_flip(&mut data, &faults);
                faults.truncate_at
            } else {
                None
            };
            match truncate {
                Some(cut) => {
                    let cut = (cut as usize).min(data.len());
                    for chunk in data[..cut].chunks(MAX_PAYLOAD) {
                        protocol::write_frame(&mut out, chunk)?;
                    }
                    // connection drops without a terminator
                }
                None => out.write_all(&protocol::encode_stream(&data))?,
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn apply_flip(data: &mut [u8], faults: &TransitFaults) {
    if let Some(bit) = faults.flip_bit {
        if !data.is_empty() {
            let bit = bit % (data.len() as u64 * 8);
            data[(bit / 8) as usize] ^= 1 << (bit % 8);
        }
    }
}

fn serve_fastboot(stream: TcpStream, device: &Mutex<SimDevice>) -> protocol::Result<()> {
    let mut reader = FrameReader::new(stream.try_clone()?);
    let mut out = stream;
    let mut staged: Option<Vec<u8>> = None;
    while let Some(frame) = reader.next_frame()? {
        let command = String::from_utf8_lossy(&frame.payload).into_owned();
        let response = if command.starts_with("download:") {
            let first = lock(device).handle_fastboot(&command, None);
            match first.data_len() {
                Some(expected) => {
                    protocol::write_frame(&mut out, &first.to_bytes())?;
                    let data = reader.read_stream()?;
                    if data.len() as u64 == expected as u64 {
                        staged = Some(data);
                        FastbootResponse::okay("")
                    } else {
                        FastbootResponse::fail(format!(
                            "size mismatch: announced {expected}, received {}",
                            data.len()
                        ))
                    }
                }
                None => first,
            }
        } else if command == "boot" {
            lock(device).handle_fastboot(&command, staged.as_deref())
        } else {
            lock(device).handle_fastboot(&command, None)
        };
        protocol::write_frame(&mut out, &response.to_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device_sim::{BootState, DeviceProfile, Partition};
    use crate::protocol::encode_frame;
    use std::io::Read;

    fn request(addr: SocketAddr, req: &str) -> Vec<u8> {
        let mut s = TcpStream::connect(addr).unwrap();
        s.write_all(&encode_frame(req.as_bytes()).unwrap()).unwrap();
        let mut buf = Vec::new();
        s.read_to_end(&mut buf).unwrap();
        buf
    }

    #[test]
    fn service_channel_over_tcp() {
        let mut p = DeviceProfile { boot_state: BootState::LiveOs, ..Default::default() };
        p.partitions.insert(Partition::Cache, vec![9u8; 70_000]);
        let srv = SimServer::spawn_local(SimDevice::new(p, 0)).unwrap();
        let raw = request(srv.service_addr(), "forward:dev/block/platform/msm_sdcc.1/by-name/cache");
        let (status, used) = protocol::decode_frame(&raw).unwrap();
        assert_eq!(status.payload, b"OKAY");
        assert_eq!(protocol::read_stream(&raw[used..]).unwrap(), vec![9u8; 70_000]);
        let raw = request(srv.service_addr(), "forward:dev/block/platform/msm_sdcc.1/by-name/nope");
        assert_eq!(raw, b"0012FAILno such device");
    }

    #[test]
    fn fastboot_download_and_boot() {
        let p = DeviceProfile { bootloader: crate::device_sim::Bootloader::Unlocked, ..Default::default() };
        let srv = SimServer::spawn_local(SimDevice::new(p, 0)).unwrap();
        let s = TcpStream::connect(srv.fastboot_addr()).unwrap();
        let mut r = FrameReader::new(s.try_clone().unwrap());
        let mut w = s;
        protocol::write_frame(&mut w, b"download:00000010").unwrap();
        assert_eq!(r.expect_frame().unwrap().payload, b"DATA00000010");
        w.write_all(&protocol::encode_stream(&[1u8; 16])).unwrap();
        assert_eq!(r.expect_frame().unwrap().payload, b"OKAY");
        protocol::write_frame(&mut w, b"boot").unwrap();
        assert_eq!(r.expect_frame().unwrap().payload, b"OKAY");
        assert_eq!(srv.snapshot().boot_state, BootState::LiveOs);
    }

    #[test]
    fn flip_is_single_bit() {
        let mut data = vec![0u8; 4];
        apply_flip(&mut data, &TransitFaults { flip_bit: Some(33), truncate_at: None });
        assert_eq!(data.iter().map(|b| b.count_ones()).sum::<u32>(), 1);
        assert_eq!(data[0], 2);
    }
}
