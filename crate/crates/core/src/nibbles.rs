use std::fmt;

use crate::codec::DecodeError;

/// A path of 4-bit values, most-significant nibble of each byte first.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Nibbles(Vec<u8>);

impl Nibbles {
    pub fn from_bytes(bytes: &[u8]) -> Self {
        let mut out = Vec::with_capacity(bytes.len() * 2);
        for b in bytes {
            out.push(b >> 4);
            out.push(b & 0x0f);
        }
        Nibbles(out)
    }

    /// Panics if any element is above 15.
    pub fn from_nibbles(nibbles: &[u8]) -> Self {
        assert!(nibbles.iter().all(|n| *n < 16), "nibble out of range");
        Nibbles(nibbles.to_vec())
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Packs back into bytes. `None` for odd lengths.
    pub fn to_bytes(&self) -> Option<Vec<u8>> {
        if !self.0.len().is_multiple_of(2) {
            return None;
        }
        Some(self.0.chunks(2).map(|p| (p[0] << 4) | p[1]).collect())
    }

    /// `prefix ‖ [nibble] ‖ self`
    pub fn prepended(&self, prefix: &[u8], nibble: Option<u8>) -> Nibbles {
        let mut out = Vec::with_capacity(prefix.len() + 1 + self.0.len());
        out.extend_from_slice(prefix);
        out.extend(nibble);
        out.extend_from_slice(&self.0);
        Nibbles(out)
    }
}

impl From<&[u8]> for Nibbles {
    fn from(nibbles: &[u8]) -> Self {
        Nibbles::from_nibbles(nibbles)
    }
}

impl fmt::Debug for Nibbles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Nibbles(")?;
        for n in &self.0 {
            write!(f, "{n:x}")?;
        }
        f.write_str(")")
    }
}

pub fn common_prefix_len(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

/// Hex-prefix (compact) encoding. The first nibble carries `2 * leaf + odd`.
pub fn hex_prefix_encode(path: &[u8], leaf: bool) -> Vec<u8> {
    let odd = path.len() % 2 == 1;
    let flag = (u8::from(leaf) << 1) | u8::from(odd);
    let mut out = Vec::with_capacity(path.len() / 2 + 1);
    let rest = if odd {
        out.push((flag << 4) | path[0]);
        &path[1..]
    } else {
        out.push(flag << 4);
        path
    };
    out.extend(rest.chunks(2).map(|p| (p[0] << 4) | p[1]));
    out
}

/// Inverse of [`hex_prefix_encode`]; returns the path and the leaf flag.
pub fn hex_prefix_decode(encoded: &[u8]) -> Result<(Nibbles, bool), DecodeError> {
    let first = *encoded
        .first()
        .ok_or(DecodeError::InvalidNode("empty hex-prefix"))?;
    let flag = first >> 4;
    if flag > 3 {
        return Err(DecodeError::InvalidNode("hex-prefix flag out of range"));
    }
    let leaf = flag & 2 != 0;
    let odd = flag & 1 != 0;
    let mut path = Vec::with_capacity(encoded.len() * 2);
    if odd {
        path.push(first & 0x0f);
    } else if first & 0x0f != 0 {
        return Err(DecodeError::NonCanonical("hex-prefix padding nibble set"));
    }
    for b in &encoded[1..] {
        path.push(b >> 4);
        path.push(b & 0x0f);
    }
    Ok((Nibbles(path), leaf))
}
