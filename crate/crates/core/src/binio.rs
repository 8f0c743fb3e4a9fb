// SPDX-License-Identifier: MIT OR Apache-2.0

//! Little-endian primitives shared by the MNTR/MNSC/MNAN codecs.

use std::io::{self, Read, Write};

use crate::error::{Error, Result};

fn header_eof(e: io::Error, what: &str) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::InvalidHeader(format!("truncated while reading {what}"))
    } else {
        Error::Io(e)
    }
}

pub(crate) fn read_magic<R: Read>(r: &mut R, expected: &[u8; 4]) -> Result<()> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| header_eof(e, "magic"))?;
    if &buf != expected {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(expected).into_owned(),
            found: String::from_utf8_lossy(&buf).into_owned(),
        });
    }
    Ok(())
}

pub(crate) fn read_version<R: Read>(r: &mut R, expected: u32) -> Result<()> {
    let found = read_u32(r, "version")?;
    if found != expected {
        return Err(Error::VersionMismatch { expected, found });
    }
    Ok(())
}

pub(crate) fn read_u8<R: Read>(r: &mut R, what: &str) -> Result<u8> {
    let mut buf = [0u8; 1];
    r.read_exact(&mut buf).map_err(|e| header_eof(e, what))?;
    Ok(buf[0])
}

pub(crate) fn read_u16<R: Read>(r: &mut R, what: &str) -> Result<u16> {
    let mut buf = [0u8; 2];
    r.read_exact(&mut buf).map_err(|e| header_eof(e, what))?;
    Ok(u16::from_le_bytes(buf))
}

pub(crate) fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| header_eof(e, what))?;
    Ok(u32::from_le_bytes(buf))
}

pub(crate) fn read_str<R: Read>(r: &mut R, what: &str) -> Result<String> {
    let len = read_u16(r, what)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(|e| header_eof(e, what))?;
    String::from_utf8(buf).map_err(|_| Error::InvalidHeader(format!("{what} is not valid UTF-8")))
}

/// Reads exactly `count` floats; a short read is reported as a truncated payload.
pub(crate) fn read_f32s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f32>> {
    let expected = count * 4;
    let mut bytes = Vec::with_capacity(expected);
    r.by_ref().take(expected as u64).read_to_end(&mut bytes)?;
    if bytes.len() != expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub(crate) fn expect_eof<R: Read>(r: &mut R) -> Result<()> {
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::TrailingBytes { extra: rest.len() });
    }
    Ok(())
}

/// Counts bytes as they are written.
pub(crate) struct CountingWriter<W> {
    inner: W,
    pub(crate) written: u64,
}

impl<W: Write> CountingWriter<W> {
    pub(crate) fn new(inner: W) -> Self {
        Self { inner, written: 0 }
    }

    pub(crate) fn bytes(&mut self, b: &[u8]) -> io::Result<()> {
        self.inner.write_all(b)?;
        self.written += b.len() as u64;
        Ok(())
    }

    pub(crate) fn u8(&mut self, v: u8) -> io::Result<()> {
        self.bytes(&[v])
    }

    pub(crate) fn u16(&mut self, v: u16) -> io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub(crate) fn u32(&mut self, v: u32) -> io::Result<()> {
        self.bytes(&v.to_le_bytes())
    }

    pub(crate) fn str(&mut self, s: &str) -> io::Result<()> {
        // Length fits: callers validate before writing.
        self.u16(s.len() as u16)?;
        self.bytes(s.as_bytes())
    }

    pub(crate) fn f32s(&mut self, values: &[f32]) -> io::Result<()> {
        for chunk in values.chunks(4096) {
            let mut buf = Vec::with_capacity(chunk.len() * 4);
            for v in chunk {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            self.bytes(&buf)?;
        }
        Ok(())
    }

    pub(crate) fn finish(mut self) -> io::Result<u64> {
        self.inner.flush()?;
        Ok(self.written)
    }
}

pub(crate) fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidHeader(format!("{what} = {v} does not fit in u32")))
}

pub(crate) fn to_u16(v: usize, what: &str) -> Result<u16> {
    u16::try_from(v).map_err(|_| Error::InvalidHeader(format!("{what} = {v} does not fit in u16")))
}
