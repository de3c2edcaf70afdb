//! MD5 + SHA1 computed side by side, the pair reported for every image.

use md5::{Digest, Md5};
use sha1::Sha1;
use std::io::{self, Read};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigestPair {
    pub md5: String,
    pub sha1: String,
}

#[derive(Clone, Default)]
pub struct DualHasher {
    md5: Md5,
    sha1: Sha1,
    len: u64,
}

impl DualHasher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, bytes: &[u8]) {
        self.md5.update(bytes);
        self.sha1.update(bytes);
        self.len += bytes.len() as u64;
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn finish(self) -> DigestPair {
        DigestPair {
            md5: hex::encode(self.md5.finalize()),
            sha1: hex::encode(self.sha1.finalize()),
        }
    }
}

pub fn digest_bytes(bytes: &[u8]) -> DigestPair {
    let mut h = DualHasher::new();
    h.update(bytes);
    h.finish()
}

pub fn digest_reader<R: Read>(mut reader: R) -> io::Result<(DigestPair, u64)> {
    let mut h = DualHasher::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = reader.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    let len = h.len();
    Ok((h.finish(), len))
}

pub fn md5_hex(bytes: &[u8]) -> String {
    hex::encode(Md5::digest(bytes))
}

pub fn sha1_hex(bytes: &[u8]) -> String {
    hex::encode(Sha1::digest(bytes))
}
