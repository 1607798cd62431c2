//! Exact text encoding of `f64` values as C99 hexadecimal floating-point
//! literals (`0x1.8p+1` is 3.0).
//!
//! Only the canonical form produced by [`format`] is accepted by [`parse`]:
//! a leading `1` (normal) or `0` (zero/subnormal) digit, at most 13 fraction
//! digits, and a binary exponent. Non-finite values are rejected.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HexFloatError {
    #[error("non-finite value cannot be encoded")]
    NonFinite,
    #[error("malformed hex float {0:?}")]
    Malformed(String),
}

const FRAC_BITS: u64 = 52;
const FRAC_MASK: u64 = (1 << FRAC_BITS) - 1;

pub fn format(v: f64) -> Result<String, HexFloatError> {
    if !v.is_finite() {
        return Err(HexFloatError::NonFinite);
    }
    let bits = v.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let biased = ((bits >> FRAC_BITS) & 0x7ff) as i64;
    let frac = bits & FRAC_MASK;
    let (lead, exp) = match (biased, frac) {
        (0, 0) => (0, 0),
        (0, _) => (0, -1022),
        _ => (1, biased - 1023),
    };
    let mut digits = format!("{frac:013x}");
    while digits.ends_with('0') {
        digits.pop();
    }
    let dot = if digits.is_empty() { "" } else { "." };
    Ok(format!("{sign}0x{lead}{dot}{digits}p{exp:+}"))
}

pub fn parse(s: &str) -> Result<f64, HexFloatError> {
    let bad = || HexFloatError::Malformed(s.to_string());
    let (negative, rest) = match s.strip_prefix('-') {
        Some(r) => (true, r),
        None => (false, s),
    };
    let rest = rest.strip_prefix("0x").ok_or_else(bad)?;
    let (mantissa, exp) = rest.split_once('p').ok_or_else(bad)?;
    let exp: i64 = exp.parse().map_err(|_| bad())?;
    let (lead, digits) = match mantissa.split_once('.') {
        Some((l, d)) if !d.is_empty() => (l, d),
        Some(_) => return Err(bad()),
        None => (mantissa, ""),
    };
    if digits.len() > 13 || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(bad());
    }
    let frac = if digits.is_empty() {
        0
    } else {
        u64::from_str_radix(digits, 16).map_err(|_| bad())? << (4 * (13 - digits.len()))
    };
    let body = match lead {
        "1" => {
            if !(-1022..=1023).contains(&exp) {
                return Err(bad());
            }
            (((exp + 1023) as u64) << FRAC_BITS) | frac
        }
        "0" => match (frac, exp) {
            (0, 0) => 0,
            (f, -1022) if f != 0 => f,
            _ => return Err(bad()),
        },
        _ => return Err(bad()),
    };
    let sign = if negative { 1u64 << 63 } else { 0 };
    Ok(f64::from_bits(sign | body))
}

/// Serde adapter for `Vec<f64>` fields stored as hex-float strings.
pub mod vec {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::{Error as _, SerializeSeq};
        let mut seq = s.serialize_seq(Some(values.len()))?;
        for &v in values {
            seq.serialize_element(&super::format(v).map_err(S::Error::custom)?)?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw: Vec<String> = Vec::deserialize(d)?;
        raw.iter()
            .map(|s| super::parse(s).map_err(D::Error::custom))
            .collect()
    }
}
