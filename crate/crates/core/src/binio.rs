//! Little-endian primitives shared by the binary file formats.

use std::io::{self, Read, Write};

pub(crate) fn read_magic<R: Read>(r: &mut R, magic: &[u8; 4]) -> crate::Result<()> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| header_err(e, "file too short for magic"))?;
    if &buf != magic {
        return Err(crate::LbseError::MalformedHeader(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&buf)
        )));
    }
    Ok(())
}

pub(crate) fn read_version<R: Read>(r: &mut R, expected: u8) -> crate::Result<()> {
    let found = read_u8(r).map_err(|e| header_err(e, "missing version byte"))?;
    if found != expected {
        return Err(crate::LbseError::UnsupportedVersion { found, expected });
    }
    Ok(())
}

/// Truncation inside a header is a format problem, not an I/O one.
pub(crate) fn header_err(e: io::Error, what: &str) -> crate::LbseError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        crate::LbseError::MalformedHeader(what.to_string())
    } else {
        crate::LbseError::Io(e)
    }
}

pub(crate) fn read_u8<R: Read>(r: &mut R) -> io::Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub(crate) fn read_f64<R: Read>(r: &mut R) -> io::Result<f64> {
    read_u64(r).map(f64::from_bits)
}

pub(crate) fn write_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn write_f64<W: Write>(w: &mut W, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

pub(crate) fn to_u32(v: usize, what: &str) -> crate::Result<u32> {
    u32::try_from(v).map_err(|_| crate::LbseError::InvalidConfig(format!("{what} {v} does not fit in u32")))
}

/// Rejects trailing bytes after a fully parsed payload.
pub(crate) fn expect_eof<R: Read>(r: &mut R) -> crate::Result<()> {
    let mut b = [0u8; 1];
    match r.read(&mut b)? {
        0 => Ok(()),
        _ => Err(crate::LbseError::DimensionMismatch(
            "trailing bytes after declared payload".into(),
        )),
    }
}

/// Maps a short read inside the payload to a dimension mismatch.
pub(crate) fn payload_err(e: io::Error) -> crate::LbseError {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        crate::LbseError::DimensionMismatch("payload shorter than header declares".into())
    } else {
        crate::LbseError::Io(e)
    }
}
