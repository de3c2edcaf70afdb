//! Length-framed wire codec shared by the device simulator and the
//! acquisition client.
//!
//! A frame is four ASCII hex digits giving the payload length, followed by
//! exactly that many payload bytes. The empty frame `0000` terminates a
//! stream. Encoders always emit uppercase hex; decoders accept either case.
//!
//! On top of the framing sit two request vocabularies:
//!
//! * the service channel ([`ServiceRequest`]), one request per connection,
//!   answered by `OKAY` or `FAIL<reason>` and then a terminated stream;
//! * the fastboot channel, where each framed command is answered by one or
//!   more framed [`FastbootResponse`]s carrying a 4-byte status prefix.

use std::fmt;
use std::io::{self, Read, Write};
use thiserror::Error;

pub const MAX_PAYLOAD: usize = 0xFFFF;
pub const TERMINATOR: &[u8] = b"0000";

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("payload of {0} bytes exceeds the 65535-byte frame limit")]
    PayloadTooLarge(usize),
    #[error("bad length header {0:?}")]
    BadLengthHeader(String),
    #[error("stream truncated: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("stream ended without a terminator frame")]
    MissingTerminator,
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, ProtocolError>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn is_terminator(&self) -> bool {
        self.payload.is_empty()
    }
}

pub fn encode_frame(payload: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(4 + payload.len());
    encode_frame_into(payload, &mut out)?;
    Ok(out)
}

fn encode_frame_into(payload: &[u8], out: &mut Vec<u8>) -> Result<()> {
    if payload.len() > MAX_PAYLOAD {
        return Err(ProtocolError::PayloadTooLarge(payload.len()));
    }
    out.extend_from_slice(format!("{:04X}", payload.len()).as_bytes());
    out.extend_from_slice(payload);
    Ok(())
}

fn parse_length(header: &[u8]) -> Result<usize> {
    let bad = || ProtocolError::BadLengthHeader(String::from_utf8_lossy(header).into_owned());
    if header.len() != 4 || !header.iter().all(u8::is_ascii_hexdigit) {
        return Err(bad());
    }
    let text = std::str::from_utf8(header).map_err(|_| bad())?;
    usize::from_str_radix(text, 16).map_err(|_| bad())
}

/// Decodes one frame from the front of `input`, returning it with the number
/// of bytes consumed.
pub fn decode_frame(input: &[u8]) -> Result<(Frame, usize)> {
    if input.len() < 4 {
        return Err(ProtocolError::Truncated {
            needed: 4,
            available: input.len(),
        });
    }
    let len = parse_length(&input[..4])?;
    let end = 4 + len;
    if input.len() < end {
        return Err(ProtocolError::Truncated {
            needed: end,
            available: input.len(),
        });
    }
    Ok((
        Frame {
            payload: input[4..end].to_vec(),
        },
        end,
    ))
}

/// Concatenates frame payloads up to the first terminator frame.
pub fn read_stream(input: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut pos = 0;
    loop {
        if pos == input.len() {
            return Err(ProtocolError::MissingTerminator);
        }
        let (frame, used) = decode_frame(&input[pos..])?;
        pos += used;
        if frame.is_terminator() {
            return Ok(out);
        }
        out.extend_from_slice(&frame.payload);
    }
}

/// Splits `data` into maximal frames and appends the terminator.
pub fn encode_stream(data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len() + 4 * (data.len() / MAX_PAYLOAD + 2));
    for chunk in data.chunks(MAX_PAYLOAD) {
        // chunks never exceed MAX_PAYLOAD
        encode_frame_into(chunk, &mut out).expect("chunk within frame limit");
    }
    out.extend_from_slice(TERMINATOR);
    out
}

/// Incremental frame reader over any byte source.
pub struct FrameReader<R> {
    inner: R,
}

impl<R: Read> FrameReader<R> {
    pub fn new(inner: R) -> Self {
        FrameReader { inner }
    }

    pub fn into_inner(self) -> R {
        self.inner
    }

    /// Reads the next frame. `Ok(None)` means the source ended cleanly on a
    /// frame boundary.
    pub fn next_frame(&mut self) -> Result<Option<Frame>> {
        let mut header = [0u8; 4];
        let got = read_full(&mut self.inner, &mut header)?;
        if got == 0 {
            return Ok(None);
        }
        if got < 4 {
            return Err(ProtocolError::Truncated {
                needed: 4,
                available: got,
            });
        }
        let len = parse_length(&header)?;
        let mut payload = vec![0u8; len];
        let got = read_full(&mut self.inner, &mut payload)?;
        if got < len {
            return Err(ProtocolError::Truncated {
                needed: 4 + len,
                available: 4 + got,
            });
        }
        Ok(Some(Frame { payload }))
    }

    /// Reads one frame that must exist.
    pub fn expect_frame(&mut self) -> Result<Frame> {
        self.next_frame()?.ok_or(ProtocolError::Truncated {
            needed: 4,
            available: 0,
        })
    }

    /// Feeds each payload of a terminated stream to `sink`, returning the
    /// total payload length.
    pub fn for_each_payload<F>(&mut self, mut sink: F) -> Result<u64>
    where
        F: FnMut(&[u8]) -> Result<()>,
    {
        let mut total = 0u64;
        loop {
            match self.next_frame()? {
                None => return Err(ProtocolError::MissingTerminator),
                Some(f) if f.is_terminator() => return Ok(total),
                Some(f) => {
                    total += f.payload.len() as u64;
                    sink(&f.payload)?;
                }
            }
        }
    }

    pub fn read_stream(&mut self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.for_each_payload(|p| {
            out.extend_from_slice(p);
            Ok(())
        })?;
        Ok(out)
    }
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

pub fn write_frame<W: Write>(w: &mut W, payload: &[u8]) -> Result<()> {
    w.write_all(&encode_frame(payload)?)?;
    Ok(())
}

pub fn write_terminator<W: Write>(w: &mut W) -> Result<()> {
    w.write_all(TERMINATOR)?;
    Ok(())
}

/// Service-channel request. Text form is `getprop:<name>`, `shell:<cmd>`,
/// `forward:<device-path>` or `logcat`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServiceRequest {
    GetProp(String),
    Shell(String),
    Forward(String),
    Logcat,
}

impl ServiceRequest {
    pub fn parse(text: &str) -> Result<Self> {
        if text.contains('\n') {
            return Err(ProtocolError::Malformed("embedded newline".into()));
        }
        if text == "logcat" {
            return Ok(ServiceRequest::Logcat);
        }
        let (kind, arg) = text
            .split_once(':')
            .ok_or_else(|| ProtocolError::Malformed(format!("unknown service {text:?}")))?;
        match kind {
            "getprop" => Ok(ServiceRequest::GetProp(arg.to_string())),
            "shell" => Ok(ServiceRequest::Shell(arg.to_string())),
            "forward" => Ok(ServiceRequest::Forward(arg.to_string())),
            _ => Err(ProtocolError::Malformed(format!("unknown service {text:?}"))),
        }
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| ProtocolError::Malformed("service request is not UTF-8".into()))?;
        Self::parse(text)
    }
}

impl fmt::Display for ServiceRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ServiceRequest::GetProp(n) => write!(f, "getprop:{n}"),
            ServiceRequest::Shell(c) => write!(f, "shell:{c}"),
            ServiceRequest::Forward(p) => write!(f, "forward:{p}"),
            ServiceRequest::Logcat => f.write_str("logcat"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FastbootStatus {
    Okay,
    Fail,
    Info,
    Data,
}

impl FastbootStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FastbootStatus::Okay => "OKAY",
            FastbootStatus::Fail => "FAIL",
            FastbootStatus::Info => "INFO",
            FastbootStatus::Data => "DATA",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FastbootResponse {
    pub status: FastbootStatus,
    pub body: String,
}

impl FastbootResponse {
    pub fn okay(body: impl Into<String>) -> Self {
        FastbootResponse {
            status: FastbootStatus::Okay,
            body: body.into(),
        }
    }

    pub fn fail(body: impl Into<String>) -> Self {
        FastbootResponse {
            status: FastbootStatus::Fail,
            body: body.into(),
        }
    }

    pub fn info(body: impl Into<String>) -> Self {
        FastbootResponse {
            status: FastbootStatus::Info,
            body: body.into(),
        }
    }

    pub fn data(expected: u32) -> Self {
        FastbootResponse {
            status: FastbootStatus::Data,
            body: format!("{expected:08x}"),
        }
    }

    pub fn is_okay(&self) -> bool {
        self.status == FastbootStatus::Okay
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.status.as_str().as_bytes().to_vec();
        out.extend_from_slice(self.body.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(ProtocolError::Malformed("fastboot response shorter than 4 bytes".into()));
        }
        let status = match &bytes[..4] {
            b"OKAY" => FastbootStatus::Okay,
            b"FAIL" => FastbootStatus::Fail,
            b"INFO" => FastbootStatus::Info,
            b"DATA" => FastbootStatus::Data,
            other => {
                return Err(ProtocolError::Malformed(format!(
                    "unknown fastboot status {:?}",
                    String::from_utf8_lossy(other)
                )))
            }
        };
        let body = String::from_utf8(bytes[4..].to_vec())
            .map_err(|_| ProtocolError::Malformed("fastboot body is not UTF-8".into()))?;
        Ok(FastbootResponse { status, body })
    }

    /// Byte count announced by a DATA response.
    pub fn data_len(&self) -> Option<u32> {
        if self.status != FastbootStatus::Data || self.body.len() != 8 {
            return None;
        }
        u32::from_str_radix(&self.body, 16).ok()
    }
}
