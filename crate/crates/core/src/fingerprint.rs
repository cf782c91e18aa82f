//! Fixed-length binary fingerprints and their Hamming similarity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Millis;
use crate::num::Real;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fingerprint {
    pub bits: Vec<bool>,
    pub scheme: String,
    pub device_id: String,
    pub interval_start_ms: Millis,
}

impl Fingerprint {
    pub fn new(
        bits: Vec<bool>,
        scheme: impl Into<String>,
        device_id: impl Into<String>,
        interval_start_ms: Millis,
    ) -> Self {
        Self {
            bits,
            scheme: scheme.into(),
            device_id: device_id.into(),
            interval_start_ms,
        }
    }

    /// Bare bit vector without metadata.
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self::new(bits, "", "", 0)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn hamming(&self, other: &Fingerprint) -> Result<usize> {
        if self.len() != other.len() {
            return Err(Error::IncompatibleFingerprints(self.len(), other.len()));
        }
        Ok(self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count())
    }

    /// `1 − hamming / length`.
    pub fn similarity<T: Real>(&self, other: &Fingerprint) -> Result<T> {
        let d = self.hamming(other)?;
        if self.is_empty() {
            return Ok(T::one());
        }
        Ok(T::one() - T::of_usize(d) / T::of_usize(self.len()))
    }

    /// Lowercase hex, first bit as the most significant bit of the first
    /// digit; the final digit is zero-padded.
    pub fn to_hex(&self) -> String {
        self.bits
            .chunks(4)
            .map(|c| {
                let v = c.iter().enumerate().fold(0u32, |acc, (i, &b)| acc | ((b as u32) << (3 - i)));
                char::from_digit(v, 16).expect("nibble")
            })
            .collect()
    }

    /// Parses `to_hex` output back into `len` bits.
    pub fn bits_from_hex(hex: &str, len: usize) -> Result<Vec<bool>> {
        if hex.len() != len.div_ceil(4) {
            return Err(Error::IncompatibleFingerprints(hex.len() * 4, len));
        }
        let mut bits = Vec::with_capacity(hex.len() * 4);
        for c in hex.chars() {
            let v = c
                .to_digit(16)
                .ok_or_else(|| Error::InvalidConfig(format!("invalid hex digit {c:?}")))?;
            bits.extend((0..4).map(|i| v & (1 << (3 - i)) != 0));
        }
        if bits[len..].iter().any(|&b| b) {
            return Err(Error::InvalidConfig("non-zero padding bits".into()));
        }
        bits.truncate(len);
        Ok(bits)
    }
}

/// Similarity of two fingerprints.
pub fn fingerprint_similarity<T: Real>(f: &Fingerprint, g: &Fingerprint) -> Result<T> {
    f.similarity(g)
}
