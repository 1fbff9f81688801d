//! Atomic file writes and the checksummed binary container shared by dataset
//! and checkpoint files.
//!
//! Container layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic
//! 8       4     format version (u32)
//! 12      8     payload length in bytes (u64)
//! 20      n     payload
//! 20+n    32    SHA-256 of the payload
//! ```
//!
//! Payloads are flat sequences of `u32`/`u64`/`f64` (IEEE-754 bits) and
//! length-prefixed arrays/strings written with [`Encoder`].

use std::fs;
use std::io::Write;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};
use sha2::{Digest, Sha256};

use crate::error::{Error, FormatError, Result};

const HEADER_LEN: usize = 8 + 4 + 8;
const CHECKSUM_LEN: usize = 32;

/// Write via a temporary sibling and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn seal(magic: [u8; 8], version: u32, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len() + CHECKSUM_LEN);
    out.extend_from_slice(&magic);
    out.write_u32::<LittleEndian>(version).unwrap();
    out.write_u64::<LittleEndian>(payload.len() as u64).unwrap();
    out.extend_from_slice(payload);
    out.extend_from_slice(&Sha256::digest(payload));
    out
}

/// Validate framing and checksum; returns the payload.
pub fn unseal(magic: [u8; 8], version: u32, bytes: &[u8]) -> std::result::Result<&[u8], FormatError> {
    if bytes.len() < HEADER_LEN {
        return Err(FormatError::Truncated(format!("{} byte header", bytes.len())));
    }
    if bytes[..8] != magic {
        return Err(FormatError::BadMagic { expected: magic });
    }
    let found = LittleEndian::read_u32(&bytes[8..12]);
    if found != version {
        return Err(FormatError::Version {
            found,
            expected: version,
        });
    }
    let len = LittleEndian::read_u64(&bytes[12..20]) as usize;
    let end = HEADER_LEN
        .checked_add(len)
        .and_then(|e| e.checked_add(CHECKSUM_LEN))
        .ok_or_else(|| FormatError::Malformed("payload length overflow".into()))?;
    if bytes.len() < end {
        return Err(FormatError::Truncated(format!(
            "expected {end} bytes, found {}",
            bytes.len()
        )));
    }
    if bytes.len() > end {
        return Err(FormatError::Malformed("trailing bytes after checksum".into()));
    }
    let payload = &bytes[HEADER_LEN..HEADER_LEN + len];
    if Sha256::digest(payload).as_slice() != &bytes[HEADER_LEN + len..end] {
        return Err(FormatError::Checksum);
    }
    Ok(payload)
}

#[derive(Debug, Default)]
pub struct Encoder {
    pub buf: Vec<u8>,
}

impl Encoder {
    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.write_u32::<LittleEndian>(v).unwrap();
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.write_u64::<LittleEndian>(v).unwrap();
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.write_f64::<LittleEndian>(v).unwrap();
    }

    pub fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.f64(x);
        }
    }

    pub fn u64s(&mut self, v: &[u64]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.u64(x);
        }
    }

    pub fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.buf.extend_from_slice(s.as_bytes());
    }
}

pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Decoder { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], FormatError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| FormatError::Malformed(format!("payload ends early at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> std::result::Result<u8, FormatError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> std::result::Result<u32, FormatError> {
        Ok(LittleEndian::read_u32(self.take(4)?))
    }

    pub fn u64(&mut self) -> std::result::Result<u64, FormatError> {
        Ok(LittleEndian::read_u64(self.take(8)?))
    }

    pub fn f64(&mut self) -> std::result::Result<f64, FormatError> {
        Ok(LittleEndian::read_f64(self.take(8)?))
    }

    fn len(&mut self, elem: usize) -> std::result::Result<usize, FormatError> {
        let n = self.u64()? as usize;
        if n.saturating_mul(elem) > self.buf.len() - self.pos {
            return Err(FormatError::Malformed(format!("array of {n} exceeds payload")));
        }
        Ok(n)
    }

    pub fn f64s(&mut self) -> std::result::Result<Vec<f64>, FormatError> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }

    pub fn u64s(&mut self) -> std::result::Result<Vec<u64>, FormatError> {
        let n = self.len(8)?;
        (0..n).map(|_| self.u64()).collect()
    }

    pub fn str(&mut self) -> std::result::Result<String, FormatError> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| FormatError::Malformed("invalid utf-8".into()))
    }

    pub fn finish(self) -> std::result::Result<(), FormatError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(FormatError::Malformed(format!(
                "{} unread payload bytes",
                self.buf.len() - self.pos
            )))
        }
    }
}
