//! Fixed-order binary encoding used for hashing and signing.
//!
//! Integers are 8-byte big-endian, variable-length byte strings carry a 4-byte
//! big-endian length prefix and lists carry a 4-byte big-endian element count.
//! Fixed-width values (digests, pseudonyms, keys) are written raw.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("unexpected end of input at offset {offset}")]
    UnexpectedEnd { offset: usize },
    #[error("{count} trailing bytes at offset {offset}")]
    TrailingBytes { offset: usize, count: usize },
    #[error("invalid utf-8 at offset {offset}")]
    InvalidUtf8 { offset: usize },
    #[error("bad magic")]
    BadMagic,
    #[error("invalid value at offset {offset}: {what}")]
    InvalidValue { offset: usize, what: &'static str },
}

pub trait Encode {
    fn encode_to(&self, out: &mut Vec<u8>);

    fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.encode_to(&mut out);
        out
    }
}

pub trait Decode: Sized {
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError>;

    /// Decodes a value that must span the whole input.
    fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let v = Self::decode_from(&mut r)?;
        r.finish()?;
        Ok(v)
    }
}

pub fn canonical_encode<T: Encode + ?Sized>(value: &T) -> Vec<u8> {
    value.canonical_bytes()
}

pub fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_be_bytes());
}

pub fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_be_bytes());
}

pub fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    put_u32(out, u32::try_from(b.len()).expect("field longer than u32::MAX"));
    out.extend_from_slice(b);
}

pub fn put_list<T: Encode>(out: &mut Vec<u8>, items: &[T]) {
    put_u32(out, u32::try_from(items.len()).expect("list longer than u32::MAX"));
    for item in items {
        item.encode_to(out);
    }
}

/// An optional value is a list of zero or one elements.
pub fn put_option<T: Encode>(out: &mut Vec<u8>, item: Option<&T>) {
    match item {
        None => put_u32(out, 0),
        Some(v) => {
            put_u32(out, 1);
            v.encode_to(out);
        }
    }
}

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

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.remaining() < n {
            return Err(DecodeError::UnexpectedEnd { offset: self.pos });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N)?);
        Ok(a)
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    pub fn string(&mut self) -> Result<String, DecodeError> {
        let offset = self.pos;
        let b = self.bytes()?;
        std::str::from_utf8(b)
            .map(str::to_owned)
            .map_err(|_| DecodeError::InvalidUtf8 { offset })
    }

    pub fn list<T: Decode>(&mut self) -> Result<Vec<T>, DecodeError> {
        let count = self.u32()? as usize;
        // Every element occupies at least one byte, so a count beyond the
        // remaining input is already known to be truncated.
        if count > self.remaining() {
            return Err(DecodeError::UnexpectedEnd { offset: self.pos });
        }
        let mut items = Vec::with_capacity(count);
        for _ in 0..count {
            items.push(T::decode_from(self)?);
        }
        Ok(items)
    }

    pub fn option<T: Decode>(&mut self) -> Result<Option<T>, DecodeError> {
        let offset = self.pos;
        match self.u32()? {
            0 => Ok(None),
            1 => Ok(Some(T::decode_from(self)?)),
            _ => Err(DecodeError::InvalidValue {
                offset,
                what: "optional field count must be 0 or 1",
            }),
        }
    }

    pub fn finish(&self) -> Result<(), DecodeError> {
        if self.remaining() != 0 {
            return Err(DecodeError::TrailingBytes {
                offset: self.pos,
                count: self.remaining(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primitives_are_big_endian_and_prefixed() {
        let mut out = Vec::new();
        put_u64(&mut out, 1);
        put_bytes(&mut out, b"ab");
        assert_eq!(out, [0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 2, b'a', b'b']);

        let mut r = Reader::new(&out);
        assert_eq!(r.u64().unwrap(), 1);
        assert_eq!(r.bytes().unwrap(), b"ab");
        r.finish().unwrap();
    }

    #[test]
    fn truncated_and_trailing_inputs_fail() {
        let mut r = Reader::new(&[0, 0, 0, 5, 1]);
        assert!(matches!(r.bytes(), Err(DecodeError::UnexpectedEnd { .. })));
        let r = Reader::new(&[1]);
        assert!(matches!(r.finish(), Err(DecodeError::TrailingBytes { count: 1, .. })));
    }

    #[test]
    fn oversized_list_count_is_rejected_before_allocating() {
        struct Byte;
        impl Decode for Byte {
            fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
                r.take(1).map(|_| Byte)
            }
        }
        let mut r = Reader::new(&[0xff, 0xff, 0xff, 0xff, 0]);
        assert!(r.list::<Byte>().is_err());
    }
}
