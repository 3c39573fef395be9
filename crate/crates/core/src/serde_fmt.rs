//! Serialization helpers shared by the JSON and CSV outputs.
//!
//! Floating-point values are written with at most nine significant digits so
//! that outputs stay byte-stable across platforms and small refactors.

use serde::{Deserialize, Deserializer, Serializer};

/// Rounds `x` to nine significant digits.
pub fn sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().unwrap_or(x)
}

/// Formats `x` with nine significant digits for CSV output.
pub fn fmt_sig9(x: f64) -> String {
    sig9(x).to_string()
}

pub fn ser_sig9<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(sig9(*x))
}

pub fn ser_opt_sig9<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => s.serialize_some(&sig9(*v)),
        None => s.serialize_none(),
    }
}

/// Packs bits MSB-first into bytes and hex-encodes them. The bit length is
/// carried separately by the caller.
pub fn bits_to_hex(bits: &[bool]) -> String {
    let bytes: Vec<u8> = bits
        .chunks(8)
        .map(|chunk| {
            chunk
                .iter()
                .enumerate()
                .fold(0u8, |acc, (i, &b)| acc | ((b as u8) << (7 - i)))
        })
        .collect();
    hex::encode(bytes)
}

pub fn hex_to_bits(s: &str, len: usize) -> Result<Vec<bool>, hex::FromHexError> {
    let bytes = hex::decode(s)?;
    Ok(bytes
        .iter()
        .flat_map(|&byte| (0..8).map(move |i| byte & (0x80 >> i) != 0))
        .take(len)
        .collect())
}

pub fn ser_bits_hex<S: Serializer>(bits: &[bool], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&bits_to_hex(bits))
}

/// Parses a string of `0`/`1` characters.
pub fn parse_bit_string(s: &str) -> Option<Vec<bool>> {
    s.chars()
        .map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect()
}

pub fn bit_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn de_bit_string<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
    let s = String::deserialize(d)?;
    parse_bit_string(&s).ok_or_else(|| serde::de::Error::custom("expected a string of 0/1"))
}

pub fn ser_bit_string<S: Serializer>(bits: &[bool], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&bit_string(bits))
}
