//! Canonical length-prefixed encoding shared by trie nodes and wire formats.
//!
//! * byte-string: `varint(len) ‖ bytes`
//! * list: `0xC0 ‖ varint(item count) ‖ items`
//!
//! Varints are unsigned LEB128 and must be minimal.

use thiserror::Error;

pub const LIST_MARKER: u8 = 0xC0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unexpected end of input at offset {0}")]
    UnexpectedEof(usize),
    #[error("varint at offset {0} is overlong or overflows")]
    BadVarint(usize),
    #[error("expected list marker at offset {0}")]
    ExpectedList(usize),
    #[error("unexpected tag 0x{tag:02x} at offset {offset}")]
    UnexpectedTag { tag: u8, offset: usize },
    #[error("{0} trailing bytes")]
    TrailingBytes(usize),
    #[error("invalid node: {0}")]
    InvalidNode(&'static str),
    #[error("non-canonical encoding: {0}")]
    NonCanonical(&'static str),
}

pub fn put_varint(out: &mut Vec<u8>, mut value: u64) {
    loop {
        let byte = (value & 0x7f) as u8;
        value >>= 7;
        if value == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

pub fn put_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    put_varint(out, bytes.len() as u64);
    out.extend_from_slice(bytes);
}

pub fn put_list_header(out: &mut Vec<u8>, items: usize) {
    out.push(LIST_MARKER);
    put_varint(out, items as u64);
}

/// Minimal big-endian bytes of an unsigned integer; zero encodes as the empty string.
pub fn uint_bytes(value: u128) -> Vec<u8> {
    let raw = value.to_be_bytes();
    let skip = raw.iter().take_while(|b| **b == 0).count();
    raw[skip..].to_vec()
}

pub fn uint_from_bytes(bytes: &[u8]) -> Result<u128, DecodeError> {
    if bytes.len() > 16 {
        return Err(DecodeError::NonCanonical("integer wider than 128 bits"));
    }
    if bytes.first() == Some(&0) {
        return Err(DecodeError::NonCanonical("integer with leading zero"));
    }
    Ok(bytes
        .iter()
        .fold(0u128, |acc, b| (acc << 8) | u128::from(*b)))
}

/// Cursor over an input buffer.
#[derive(Debug, Clone)]
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn consumed_since(&self, start: usize) -> &'a [u8] {
        &self.buf[start..self.pos]
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn peek(&self) -> Result<u8, DecodeError> {
        self.buf
            .get(self.pos)
            .copied()
            .ok_or(DecodeError::UnexpectedEof(self.pos))
    }

    pub fn byte(&mut self) -> Result<u8, DecodeError> {
        let b = self.peek()?;
        self.pos += 1;
        Ok(b)
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.remaining() < n {
            return Err(DecodeError::UnexpectedEof(self.buf.len()));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    pub fn varint(&mut self) -> Result<u64, DecodeError> {
        let start = self.pos;
        let mut value = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.byte()?;
            let chunk = u64::from(b & 0x7f);
            if shift == 63 && chunk > 1 {
                return Err(DecodeError::BadVarint(start));
            }
            value |= chunk << shift;
            if b & 0x80 == 0 {
                if b == 0 && shift > 0 {
                    return Err(DecodeError::BadVarint(start));
                }
                return Ok(value);
            }
        }
        Err(DecodeError::BadVarint(start))
    }

    /// A varint used as a length or count; bounded by the bytes left in the buffer.
    pub fn length(&mut self) -> Result<usize, DecodeError> {
        let start = self.pos;
        let n = self.varint()?;
        if n > self.remaining() as u64 {
            return Err(DecodeError::UnexpectedEof(start));
        }
        Ok(n as usize)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let n = self.length()?;
        self.take(n)
    }

    pub fn list_header(&mut self) -> Result<usize, DecodeError> {
        let at = self.pos;
        if self.byte()? != LIST_MARKER {
            return Err(DecodeError::ExpectedList(at));
        }
        self.length()
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(DecodeError::TrailingBytes(n)),
        }
    }
}
