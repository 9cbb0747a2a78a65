//! Shared versioned binary container for on-disk artifacts.
//!
//! Every persisted artifact (reference tables, trained forests) starts with an
//! eight-byte magic string, a format version, and a payload-kind tag, followed
//! by a kind-specific little-endian body. Readers fail with the byte offset of
//! the first malformed field, so truncation and version skew are diagnosable.

use crate::{Error, Result};

pub(crate) const MAGIC: [u8; 8] = *b"CABCBIN\0";
pub(crate) const VERSION: u32 = 1;
pub(crate) const KIND_REFERENCE_TABLE: u32 = 1;
pub(crate) const KIND_FOREST: u32 = 2;

/// Append-only little-endian byte sink producing a container image.
pub(crate) struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    /// Start a container of the given payload kind (magic + version + kind).
    pub(crate) fn new(kind: u32) -> Self {
        let mut w = ByteWriter { buf: Vec::new() };
        w.buf.extend_from_slice(&MAGIC);
        w.u32(VERSION);
        w.u32(kind);
        w
    }

    pub(crate) fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub(crate) fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    /// Length-prefixed UTF-8 string.
    pub(crate) fn string(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    /// Length-prefixed vector of doubles.
    pub(crate) fn f64_slice(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.f64(x);
        }
    }

    /// Length-prefixed vector of 32-bit indices.
    pub(crate) fn u32_slice(&mut self, v: &[u32]) {
        self.u64(v.len() as u64);
        for &x in v {
            self.u32(x);
        }
    }

    pub(crate) fn into_bytes(self) -> Vec<u8> {
        self.buf
    }
}

/// Cursor over a container image; every failure reports the byte offset.
#[derive(Debug)]
pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    /// Validate magic, version, and payload kind, leaving the cursor at the
    /// start of the body.
    pub(crate) fn open(buf: &'a [u8], expected_kind: u32) -> Result<Self> {
        let mut r = ByteReader { buf, pos: 0 };
        if buf.len() < MAGIC.len() || buf[..MAGIC.len()] != MAGIC {
            return Err(r.corrupt("bad magic (not a container file)"));
        }
        r.pos = MAGIC.len();
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Corrupt {
                offset: MAGIC.len() as u64,
                msg: format!("unsupported container version {version} (expected {VERSION})"),
            });
        }
        let kind_at = r.pos as u64;
        let kind = r.u32()?;
        if kind != expected_kind {
            return Err(Error::Corrupt {
                offset: kind_at,
                msg: format!("payload kind {kind}, expected {expected_kind}"),
            });
        }
        Ok(r)
    }

    pub(crate) fn corrupt(&self, msg: impl Into<String>) -> Error {
        Error::Corrupt { offset: self.pos as u64, msg: msg.into() }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.corrupt(format!(
                "truncated: wanted {n} bytes for {what}, {} remain",
                self.buf.len() - self.pos
            )));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1, "u8")?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, "u32")?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, "u64")?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, "f64")?.try_into().unwrap()))
    }

    pub(crate) fn string(&mut self) -> Result<String> {
        let len = self.u32()? as usize;
        let bytes = self.take(len, "string body")?;
        String::from_utf8(bytes.to_vec()).map_err(|e| self.corrupt(format!("invalid UTF-8: {e}")))
    }

    /// Length-prefixed vector of doubles; the length is validated against the
    /// remaining bytes before allocating.
    pub(crate) fn f64_vec(&mut self) -> Result<Vec<f64>> {
        let len = self.u64()? as usize;
        if self.buf.len() - self.pos < len.saturating_mul(8) {
            return Err(self.corrupt(format!("truncated: f64 vector claims {len} entries")));
        }
        (0..len).map(|_| self.f64()).collect()
    }

    /// Length-prefixed vector of 32-bit indices with the same guard.
    pub(crate) fn u32_vec(&mut self) -> Result<Vec<u32>> {
        let len = self.u64()? as usize;
        if self.buf.len() - self.pos < len.saturating_mul(4) {
            return Err(self.corrupt(format!("truncated: u32 vector claims {len} entries")));
        }
        (0..len).map(|_| self.u32()).collect()
    }

    /// Assert the cursor consumed the whole image.
    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(self.corrupt(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_all_field_kinds() {
        let mut w = ByteWriter::new(KIND_FOREST);
        w.u8(7);
        w.u32(123);
        w.u64(u64::MAX - 5);
        w.f64(-0.1);
        w.string("héllo");
        w.f64_slice(&[1.5, f64::MIN_POSITIVE]);
        w.u32_slice(&[0, 9, 2]);
        let bytes = w.into_bytes();

        let mut r = ByteReader::open(&bytes, KIND_FOREST).unwrap();
        assert_eq!(r.u8().unwrap(), 7);
        assert_eq!(r.u32().unwrap(), 123);
        assert_eq!(r.u64().unwrap(), u64::MAX - 5);
        assert_eq!(r.f64().unwrap().to_bits(), (-0.1f64).to_bits());
        assert_eq!(r.string().unwrap(), "héllo");
        assert_eq!(r.f64_vec().unwrap(), vec![1.5, f64::MIN_POSITIVE]);
        assert_eq!(r.u32_vec().unwrap(), vec![0, 9, 2]);
        r.finish().unwrap();
    }

    #[test]
    fn header_and_truncation_failures_name_offsets() {
        let bytes = ByteWriter::new(KIND_REFERENCE_TABLE).into_bytes();
        // Wrong kind is reported at the kind field's offset.
        match ByteReader::open(&bytes, KIND_FOREST) {
            Err(Error::Corrupt { offset, .. }) => assert_eq!(offset, 12),
            other => panic!("expected corrupt kind, got {other:?}"),
        }
        // Bad magic.
        assert!(ByteReader::open(b"not a container", KIND_FOREST).is_err());
        // Truncated body: a u32 read past the end names the current offset.
        let mut r = ByteReader::open(&bytes, KIND_REFERENCE_TABLE).unwrap();
        match r.u32() {
            Err(Error::Corrupt { offset, msg }) => {
                assert_eq!(offset, bytes.len() as u64);
                assert!(msg.contains("truncated"), "{msg}");
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
        // Oversized vector length claim fails before allocating.
        let mut w = ByteWriter::new(KIND_FOREST);
        w.u64(u64::MAX);
        let bytes = w.into_bytes();
        let mut r = ByteReader::open(&bytes, KIND_FOREST).unwrap();
        assert!(r.f64_vec().is_err());
    }
}
