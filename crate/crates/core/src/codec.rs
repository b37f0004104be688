//! Little-endian container codec shared by the embedding and checkpoint
//! files: 4 magic bytes, a `u16` version, then format-specific records.

#[derive(Debug, thiserror::Error)]
pub enum CodecError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    Magic { expected: String, found: String },
    #[error("unsupported version {found} (expected {expected})")]
    Version { expected: u16, found: u16 },
    #[error("truncated payload: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("invalid utf-8 string at offset {0}")]
    Utf8(usize),
    #[error("{0} trailing bytes after the last record")]
    Trailing(usize),
}

#[derive(Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn with_header(magic: &[u8; 4], version: u16) -> Self {
        let mut w = Self::default();
        w.buf.extend_from_slice(magic);
        w.u16(version);
        w
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    /// Length-prefixed (`u32`) UTF-8 string.
    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.buf.extend_from_slice(s.as_bytes());
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    /// Checks magic and version and positions the reader after them.
    pub fn with_header(buf: &'a [u8], magic: &[u8; 4], version: u16) -> Result<Self, CodecError> {
        let mut r = Self { buf, pos: 0 };
        let found = r.take(4)?;
        if found != magic {
            return Err(CodecError::Magic {
                expected: String::from_utf8_lossy(magic).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        let v = r.u16()?;
        if v != version {
            return Err(CodecError::Version {
                expected: version,
                found: v,
            });
        }
        Ok(r)
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(CodecError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f32(&mut self) -> Result<f32, CodecError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64, CodecError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn str(&mut self) -> Result<String, CodecError> {
        let at = self.pos;
        let n = self.u32()? as usize;
        let bytes = self.take(n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| CodecError::Utf8(at))
    }

    /// Fails unless every byte has been consumed.
    pub fn finish(self) -> Result<(), CodecError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(CodecError::Trailing(n)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_values() {
        let mut w = Writer::with_header(b"TEST", 3);
        w.u32(7);
        w.f64(-0.1);
        w.str("héllo");
        let bytes = w.finish();
        assert_eq!(&bytes[..6], b"TEST\x03\x00");
        let mut r = Reader::with_header(&bytes, b"TEST", 3).unwrap();
        assert_eq!(r.u32().unwrap(), 7);
        assert_eq!(r.f64().unwrap().to_bits(), (-0.1f64).to_bits());
        assert_eq!(r.str().unwrap(), "héllo");
        r.finish().unwrap();
    }

    #[test]
    fn rejects_wrong_header() {
        let bytes = Writer::with_header(b"TEST", 1).finish();
        assert!(matches!(
            Reader::with_header(&bytes, b"NOPE", 1),
            Err(CodecError::Magic { .. })
        ));
        assert!(matches!(
            Reader::with_header(&bytes, b"TEST", 2),
            Err(CodecError::Version { found: 1, .. })
        ));
    }

    #[test]
    fn truncation_detected() {
        let mut w = Writer::with_header(b"TEST", 1);
        w.u64(1);
        let bytes = w.finish();
        let mut r = Reader::with_header(&bytes[..10], b"TEST", 1).unwrap();
        assert!(matches!(r.u64(), Err(CodecError::Truncated { .. })));
    }
}
