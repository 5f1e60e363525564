use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use sha1::{Digest, Sha1};

use super::OverlayError;

/// Number of bytes in an identifier.
pub const ID_BYTES: usize = 20;
/// Number of base-16 digits in an identifier.
pub const ID_DIGITS: usize = ID_BYTES * 2;

/// A 160-bit identifier on the overlay ring, stored big-endian.
///
/// The derived ordering on the byte array is the unsigned integer ordering.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NodeId([u8; ID_BYTES]);

impl NodeId {
    pub const ZERO: NodeId = NodeId([0; ID_BYTES]);

    pub const fn from_bytes(bytes: [u8; ID_BYTES]) -> Self {
        NodeId(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; ID_BYTES] {
        &self.0
    }

    /// `2^exp` for `exp < 160`.
    pub fn pow2(exp: u32) -> Self {
        assert!(exp < 160, "exponent out of range");
        let mut bytes = [0u8; ID_BYTES];
        let byte = ID_BYTES - 1 - (exp / 8) as usize;
        bytes[byte] = 1 << (exp % 8);
        NodeId(bytes)
    }

    /// Low 128 bits set from `v`, high bits zero.
    pub fn from_u128(v: u128) -> Self {
        let mut bytes = [0u8; ID_BYTES];
        bytes[4..].copy_from_slice(&v.to_be_bytes());
        NodeId(bytes)
    }

    /// Hex digit `i` counted from the most significant end.
    pub fn digit(&self, i: usize) -> u8 {
        let b = self.0[i / 2];
        if i % 2 == 0 {
            b >> 4
        } else {
            b & 0x0f
        }
    }

    /// Number of leading hex digits shared with `other`.
    pub fn shared_prefix_len(&self, other: &NodeId) -> usize {
        for (i, (a, b)) in self.0.iter().zip(other.0.iter()).enumerate() {
            let x = a ^ b;
            if x != 0 {
                return i * 2 + usize::from(x & 0xf0 == 0);
            }
        }
        ID_DIGITS
    }

    /// `(self - other) mod 2^160`.
    pub fn wrapping_sub(&self, other: &NodeId) -> NodeId {
        let mut out = [0u8; ID_BYTES];
        let mut borrow = 0i16;
        for i in (0..ID_BYTES).rev() {
            let mut d = self.0[i] as i16 - other.0[i] as i16 - borrow;
            if d < 0 {
                d += 256;
                borrow = 1;
            } else {
                borrow = 0;
            }
            out[i] = d as u8;
        }
        NodeId(out)
    }

    /// Clockwise distance from `self` to `other`, i.e. `(other - self) mod 2^160`.
    pub fn cw_distance(&self, other: &NodeId) -> NodeId {
        other.wrapping_sub(self)
    }

    /// `min(|a-b|, 2^160 - |a-b|)`.
    pub fn circular_distance(&self, other: &NodeId) -> NodeId {
        let a = self.wrapping_sub(other);
        let b = other.wrapping_sub(self);
        a.min(b)
    }

    /// Orders `a` and `b` by circular distance to `self`, ties toward the
    /// numerically smaller id.
    pub fn cmp_closeness(&self, a: &NodeId, b: &NodeId) -> Ordering {
        self.circular_distance(a)
            .cmp(&self.circular_distance(b))
            .then_with(|| a.cmp(b))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeId({})", &self.to_hex()[..8])
    }
}

impl FromStr for NodeId {
    type Err = OverlayError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != ID_DIGITS || s.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(OverlayError::InvalidArgument(format!(
                "node id must be {ID_DIGITS} lowercase hex digits"
            )));
        }
        let mut bytes = [0u8; ID_BYTES];
        hex::decode_to_slice(s, &mut bytes)
            .map_err(|e| OverlayError::InvalidArgument(format!("bad node id: {e}")))?;
        Ok(NodeId(bytes))
    }
}

/// SHA-1 of the UTF-8 bytes of `name`, read as a 160-bit integer.
pub fn hash_name(name: &str) -> Result<NodeId, OverlayError> {
    if name.is_empty() {
        return Err(OverlayError::InvalidArgument("name must be non-empty".into()));
    }
    let digest = Sha1::digest(name.as_bytes());
    let mut bytes = [0u8; ID_BYTES];
    bytes.copy_from_slice(&digest);
    Ok(NodeId(bytes))
}
