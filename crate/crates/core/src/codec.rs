//! Canonical byte encoding.
//!
//! Every hashed or signed structure in the crate goes through this module.
//! The layout is fixed: fields in declaration order, big-endian integers,
//! `u32` length prefixes for variable-length data, `u8` tags for enums and
//! options. Decoding is strict and rejects trailing bytes, so any accepted
//! byte string has exactly one decoded value.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("unexpected end of input: needed {needed} bytes at offset {offset}")]
    UnexpectedEof { offset: usize, needed: usize },
    #[error("{0} trailing bytes after value")]
    TrailingBytes(usize),
    #[error("invalid tag {tag} for {what}")]
    InvalidTag { what: &'static str, tag: u8 },
    #[error("invalid utf-8 string")]
    InvalidUtf8,
    #[error("length {0} exceeds remaining input")]
    LengthOverflow(u64),
    #[error("invalid value: {0}")]
    Invalid(String),
}

#[derive(Debug, Default, Clone)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.buf
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn put_u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn put_bool(&mut self, v: bool) {
        self.buf.push(v as u8);
    }

    pub fn put_u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    pub fn put_i64(&mut self, v: i64) {
        self.buf.extend_from_slice(&v.to_be_bytes());
    }

    /// Raw bytes without a length prefix, for fixed-width fields.
    pub fn put_raw(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    pub fn put_bytes(&mut self, bytes: &[u8]) {
        self.put_len(bytes.len());
        self.buf.extend_from_slice(bytes);
    }

    pub fn put_str(&mut self, s: &str) {
        self.put_bytes(s.as_bytes());
    }

    pub fn put_len(&mut self, len: usize) {
        let len = u32::try_from(len).expect("canonical length exceeds u32");
        self.put_u32(len);
    }

    pub fn put<T: Canonical + ?Sized>(&mut self, v: &T) {
        v.encode_to(self);
    }

    pub fn put_vec<T: Canonical>(&mut self, items: &[T]) {
        self.put_len(items.len());
        for item in items {
            item.encode_to(self);
        }
    }

    pub fn put_option<T: Canonical>(&mut self, v: &Option<T>) {
        match v {
            None => self.put_u8(0),
            Some(inner) => {
                self.put_u8(1);
                inner.encode_to(self);
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn finish(&self) -> Result<(), CodecError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(CodecError::TrailingBytes(n)),
        }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.remaining() < n {
            return Err(CodecError::UnexpectedEof {
                offset: self.pos,
                needed: n,
            });
        }
        let out = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn take_array<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn bool(&mut self) -> Result<bool, CodecError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            tag => Err(CodecError::InvalidTag { what: "bool", tag }),
        }
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_be_bytes(self.take_array()?))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.take_array()?))
    }

    pub fn i64(&mut self) -> Result<i64, CodecError> {
        Ok(i64::from_be_bytes(self.take_array()?))
    }

    /// Reads a `u32` length and checks it against the remaining input
    /// assuming each element occupies at least `min_elem` bytes.
    pub fn len(&mut self, min_elem: usize) -> Result<usize, CodecError> {
        let len = self.u32()? as usize;
        if len.saturating_mul(min_elem) > self.remaining() {
            return Err(CodecError::LengthOverflow(len as u64));
        }
        Ok(len)
    }

    pub fn bytes(&mut self) -> Result<Vec<u8>, CodecError> {
        let len = self.len(1)?;
        Ok(self.take(len)?.to_vec())
    }

    pub fn string(&mut self) -> Result<String, CodecError> {
        String::from_utf8(self.bytes()?).map_err(|_| CodecError::InvalidUtf8)
    }

    pub fn get<T: Canonical>(&mut self) -> Result<T, CodecError> {
        T::decode_from(self)
    }

    pub fn vec<T: Canonical>(&mut self) -> Result<Vec<T>, CodecError> {
        let len = self.len(1)?;
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            out.push(T::decode_from(self)?);
        }
        Ok(out)
    }

    pub fn option<T: Canonical>(&mut self) -> Result<Option<T>, CodecError> {
        match self.u8()? {
            0 => Ok(None),
            1 => Ok(Some(T::decode_from(self)?)),
            tag => Err(CodecError::InvalidTag { what: "option", tag }),
        }
    }
}

/// A type with a single, platform-independent byte representation.
pub trait Canonical: Sized {
    fn encode_to(&self, w: &mut Writer);
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError>;

    fn to_canonical_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.encode_to(&mut w);
        w.into_bytes()
    }

    fn from_canonical_bytes(bytes: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::new(bytes);
        let v = Self::decode_from(&mut r)?;
        r.finish()?;
        Ok(v)
    }
}

impl Canonical for u64 {
    fn encode_to(&self, w: &mut Writer) {
        w.put_u64(*self);
    }
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        r.u64()
    }
}

impl Canonical for i64 {
    fn encode_to(&self, w: &mut Writer) {
        w.put_i64(*self);
    }
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        r.i64()
    }
}

impl Canonical for String {
    fn encode_to(&self, w: &mut Writer) {
        w.put_str(self);
    }
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        r.string()
    }
}

impl<A: Canonical, B: Canonical> Canonical for (A, B) {
    fn encode_to(&self, w: &mut Writer) {
        self.0.encode_to(w);
        self.1.encode_to(w);
    }
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok((A::decode_from(r)?, B::decode_from(r)?))
    }
}

impl Canonical for bool {
    fn encode_to(&self, w: &mut Writer) {
        w.put_bool(*self);
    }
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        r.bool()
    }
}

impl<T: Canonical> Canonical for Vec<T> {
    fn encode_to(&self, w: &mut Writer) {
        w.put_vec(self);
    }
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        r.vec()
    }
}

impl<T: Canonical> Canonical for Option<T> {
    fn encode_to(&self, w: &mut Writer) {
        w.put_option(self);
    }
    fn decode_from(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        r.option()
    }
}

/// Implements [`Canonical`] for a struct by encoding the listed fields in
/// order. The list must name every field.
#[macro_export]
macro_rules! canonical_struct {
    ($name:ident { $($field:ident),* $(,)? }) => {
        impl $crate::codec::Canonical for $name {
            fn encode_to(&self, w: &mut $crate::codec::Writer) {
                $( $crate::codec::Canonical::encode_to(&self.$field, w); )*
            }
            fn decode_from(
                r: &mut $crate::codec::Reader<'_>,
            ) -> Result<Self, $crate::codec::CodecError> {
                Ok(Self {
                    $( $field: $crate::codec::Canonical::decode_from(r)?, )*
                })
            }
        }
    };
}

/// Implements [`Canonical`] for a field-less enum as a single tag byte.
#[macro_export]
macro_rules! canonical_tag_enum {
    ($name:ident { $($variant:ident = $tag:expr),* $(,)? }) => {
        impl $crate::codec::Canonical for $name {
            fn encode_to(&self, w: &mut $crate::codec::Writer) {
                let tag: u8 = match self { $( $name::$variant => $tag, )* };
                w.put_u8(tag);
            }
            fn decode_from(
                r: &mut $crate::codec::Reader<'_>,
            ) -> Result<Self, $crate::codec::CodecError> {
                match r.u8()? {
                    $( $tag => Ok($name::$variant), )*
                    tag => Err($crate::codec::CodecError::InvalidTag { what: stringify!($name), tag }),
                }
            }
        }
    };
}
