use crate::protocol::{self, FastbootResponse, FastbootStatus, FrameReader, ProtocolError, ServiceRequest};
use std::io::{self, Write};
use std::net::{SocketAddr, TcpStream};
use std::time::Duration;

const CONNECT_TIMEOUT: Duration = Duration::from_secs(5);
const IO_TIMEOUT: Duration = Duration::from_secs(60);

fn connect(addr: SocketAddr) -> io::Result<TcpStream> {
    let s = TcpStream::connect_timeout(&addr, CONNECT_TIMEOUT)?;
    s.set_read_timeout(Some(IO_TIMEOUT))?;
    s.set_write_timeout(Some(IO_TIMEOUT))?;
    s.set_nodelay(true)?;
    Ok(s)
}

/// Outcome of opening a service: a readable stream, or the device's refusal.
pub enum ServiceClient {
    Open(FrameReader<TcpStream>),
    Refused(String),
}

impl ServiceClient {
    pub fn open(addr: SocketAddr, request: &ServiceRequest) -> Result<Self, ProtocolError> {
        let mut stream = connect(addr)?;
        protocol::write_frame(&mut stream, request.to_string().as_bytes())?;
        stream.flush()?;
        let mut reader = FrameReader::new(stream);
        let status = reader.expect_frame()?;
        if status.payload == b"OKAY" {
            Ok(ServiceClient::Open(reader))
        } else if let Some(reason) = status.payload.strip_prefix(b"FAIL") {
            Ok(ServiceClient::Refused(String::from_utf8_lossy(reason).into_owned()))
        } else {
            Err(ProtocolError::Malformed(format!(
                "unexpected service status {:?}",
                String::from_utf8_lossy(&status.payload)
            )))
        }
    }

    /// Runs a request to completion and returns the whole stream.
    pub fn collect(addr: SocketAddr, request: &ServiceRequest) -> Result<Result<Vec<u8>, String>, ProtocolError> {
        match Self::open(addr, request)? {
            ServiceClient::Open(mut r) => Ok(Ok(r.read_stream()?)),
            ServiceClient::Refused(reason) => Ok(Err(reason)),
        }
    }
}

pub struct FastbootClient {
    reader: FrameReader<TcpStream>,
    writer: TcpStream,
    /// INFO lines seen since the last command was sent.
    pub info: Vec<String>,
}

impl FastbootClient {
    pub fn connect(addr: SocketAddr) -> Result<Self, ProtocolError> {
        let s = connect(addr)?;
        Ok(FastbootClient {
            reader: FrameReader::new(s.try_clone()?),
            writer: s,
            info: Vec::new(),
        })
    }

    fn read_response(&mut self) -> Result<FastbootResponse, ProtocolError> {
        loop {
            let frame = self.reader.expect_frame()?;
            let r = FastbootResponse::from_bytes(&frame.payload)?;
            if r.status == FastbootStatus::Info {
                self.info.push(r.body);
                continue;
            }
            return Ok(r);
        }
    }

    pub fn command(&mut self, command: &str) -> Result<FastbootResponse, ProtocolError> {
        self.info.clear();
        protocol::write_frame(&mut self.writer, command.as_bytes())?;
        self.read_response()
    }

    pub fn getvar(&mut self, var: &str) -> Result<Result<String, String>, ProtocolError> {
        let r = self.command(&format!("getvar:{var}"))?;
        Ok(if r.is_okay() { Ok(r.body) } else { Err(r.body) })
    }

    /// `download:<len>` followed by the data phase. Returns the final
    /// response, or the refusal of the announce step.
    pub fn download(&mut self, data: &[u8]) -> Result<FastbootResponse, ProtocolError> {
        let len = u32::try_from(data.len())
            .map_err(|_| ProtocolError::Malformed("image larger than 4 GiB".into()))?;
        let first = self.command(&format!("download:{len:08x}"))?;
        if first.status != FastbootStatus::Data {
            return Ok(first);
        }
        if first.data_len() != Some(len) {
            return Err(ProtocolError::Malformed(format!("device announced {:?}", first.body)));
        }
        let mut w = io::BufWriter::new(&self.writer);
        w.write_all(&protocol::encode_stream(data))?;
        w.flush()?;
        drop(w);
        self.read_response()
    }
}
