//! Deterministic CBOR (RFC 8949 core deterministic encoding) over the
//! subset this crate uses: unsigned integers, byte and text strings, and
//! definite-length arrays. Maps are never emitted; keyed data is encoded
//! as arrays of pairs sorted by key.
//!
//! Decoding is strict: the input must be exactly one item whose canonical
//! re-encoding is byte-identical to the input.

use ciborium::value::Value;
use thiserror::Error;

use crate::crypto::{Digest, PublicKey, Signature};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CborError {
    #[error("invalid cbor: {0}")]
    Syntax(String),
    #[error("non-canonical or trailing bytes")]
    NonCanonical,
    #[error("{0}")]
    Shape(String),
}

pub fn encode(value: &Value) -> Vec<u8> {
    let mut out = Vec::new();
    ciborium::ser::into_writer(value, &mut out).expect("writing to a Vec cannot fail");
    out
}

pub fn decode(bytes: &[u8]) -> Result<Value, CborError> {
    let value: Value =
        ciborium::de::from_reader(bytes).map_err(|e| CborError::Syntax(e.to_string()))?;
    if !is_canonical(&value) || encode(&value) != bytes {
        return Err(CborError::NonCanonical);
    }
    Ok(value)
}

fn is_canonical(value: &Value) -> bool {
    match value {
        Value::Integer(_) | Value::Bytes(_) | Value::Text(_) => true,
        Value::Array(items) => items.iter().all(is_canonical),
        _ => false,
    }
}

pub fn uint(v: u64) -> Value {
    Value::Integer(v.into())
}

pub fn text(s: &str) -> Value {
    Value::Text(s.to_owned())
}

pub fn bytes(b: &[u8]) -> Value {
    Value::Bytes(b.to_vec())
}

pub fn array(items: Vec<Value>) -> Value {
    Value::Array(items)
}

/// Sequential reader over the elements of a CBOR array.
pub struct Fields {
    items: std::vec::IntoIter<Value>,
    context: &'static str,
}

impl Fields {
    pub fn new(value: Value, expected_len: usize, context: &'static str) -> Result<Self, CborError> {
        match value {
            Value::Array(items) if items.len() == expected_len => Ok(Self {
                items: items.into_iter(),
                context,
            }),
            Value::Array(items) => Err(CborError::Shape(format!(
                "{context}: expected {expected_len} fields, got {}",
                items.len()
            ))),
            _ => Err(CborError::Shape(format!("{context}: expected array"))),
        }
    }

    fn next(&mut self) -> Result<Value, CborError> {
        self.items
            .next()
            .ok_or_else(|| CborError::Shape(format!("{}: missing field", self.context)))
    }

    fn shape(&self, what: &str) -> CborError {
        CborError::Shape(format!("{}: expected {what}", self.context))
    }

    pub fn uint(&mut self) -> Result<u64, CborError> {
        match self.next()? {
            Value::Integer(i) => u64::try_from(i).map_err(|_| self.shape("unsigned integer")),
            _ => Err(self.shape("unsigned integer")),
        }
    }

    pub fn text(&mut self) -> Result<String, CborError> {
        match self.next()? {
            Value::Text(s) => Ok(s),
            _ => Err(self.shape("text")),
        }
    }

    pub fn bytes(&mut self) -> Result<Vec<u8>, CborError> {
        match self.next()? {
            Value::Bytes(b) => Ok(b),
            _ => Err(self.shape("bytes")),
        }
    }

    pub fn array(&mut self) -> Result<Vec<Value>, CborError> {
        match self.next()? {
            Value::Array(a) => Ok(a),
            _ => Err(self.shape("array")),
        }
    }

    pub fn value(&mut self) -> Result<Value, CborError> {
        self.next()
    }

    pub fn digest(&mut self) -> Result<Digest, CborError> {
        let b = self.bytes()?;
        Digest::from_slice(&b).map_err(|_| self.shape("32-byte digest"))
    }

    pub fn public_key(&mut self) -> Result<PublicKey, CborError> {
        let b = self.bytes()?;
        PublicKey::from_slice(&b).map_err(|_| self.shape("32-byte public key"))
    }

    pub fn signature(&mut self) -> Result<Signature, CborError> {
        let b = self.bytes()?;
        Signature::from_slice(&b).map_err(|_| self.shape("64-byte signature"))
    }

    pub fn text_list(&mut self) -> Result<Vec<String>, CborError> {
        self.array()?
            .into_iter()
            .map(|v| match v {
                Value::Text(s) => Ok(s),
                _ => Err(self.shape("text list")),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_integer_widths() {
        assert_eq!(encode(&uint(0)), [0x00]);
        assert_eq!(encode(&uint(23)), [0x17]);
        assert_eq!(encode(&uint(24)), [0x18, 24]);
        assert_eq!(encode(&uint(256)), [0x19, 1, 0]);
        assert_eq!(encode(&array(vec![])), [0x80]);
    }

    #[test]
    fn strict_decode_rejects_non_minimal_and_trailing() {
        // 0 encoded in one extra byte
        assert_eq!(decode(&[0x18, 0x00]), Err(CborError::NonCanonical));
        // indefinite-length array
        assert_eq!(decode(&[0x9f, 0x01, 0xff]), Err(CborError::NonCanonical));
        assert_eq!(decode(&[0x01, 0x01]), Err(CborError::NonCanonical));
        assert!(decode(&[0x82, 0x01]).is_err());
        // maps are outside the accepted subset
        assert_eq!(decode(&[0xa0]), Err(CborError::NonCanonical));
        assert_eq!(decode(&[0x82, 0x01, 0x61, b'a']).unwrap(), array(vec![uint(1), text("a")]));
    }
}
