//! Running-key expansion.
//!
//! A short shared [`SeedKey`] is expanded into one basis selector per qubit.
//! [`Lfsr`] is the pseudo-random expander; [`repetition_running_key`] is the
//! block-repetition layout whose structure the block-guess attack exploits.
//! Any deterministic bit source can be plugged in through [`BitSource`].
//!
//! LFSR convention: Fibonacci configuration with register stages `1..=L`,
//! output taken from stage 1 and feedback shifted in at stage `L`. Tap `t`
//! is the exponent of `x^t` in the connection polynomial
//! `x^L + Σ x^t + 1` and reads stage `L + 1 − t`, so tap `L` always reads the
//! output stage. A primitive polynomial gives the maximal period `2^L − 1`.
//! Note that this is one less than `2^L`: the all-zero state is excluded.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::qubit::BasisAlphabet;
use crate::serde_fmt::{bit_string, parse_bit_string};
use crate::{Error, Result};

/// A shared secret seed key `K_s`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SeedKey {
    bits: Vec<bool>,
}

impl SeedKey {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::domain("seed key must have at least one bit"));
        }
        Ok(SeedKey { bits })
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Result<Self> {
        SeedKey::new((0..len).map(|_| rng.gen()).collect())
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.bits.iter().all(|&b| !b)
    }
}

impl FromStr for SeedKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = parse_bit_string(s.trim())
            .ok_or_else(|| Error::Parse(format!("seed key {s:?} is not a 0/1 string")))?;
        SeedKey::new(bits)
    }
}

impl fmt::Display for SeedKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&bit_string(&self.bits))
    }
}

impl Serialize for SeedKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for SeedKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Connection polynomial of an LFSR, written `"L:tap,tap,..."`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LfsrSpec {
    length: usize,
    taps: Vec<usize>,
}

impl LfsrSpec {
    /// Taps must lie in `[1, L]`, include `L`, and number at least two.
    pub fn new(length: usize, taps: &[usize]) -> Result<Self> {
        let mut taps = taps.to_vec();
        taps.sort_unstable_by(|a, b| b.cmp(a));
        taps.dedup();
        if length == 0 {
            return Err(Error::domain("LFSR length must be positive"));
        }
        if taps.len() < 2 {
            return Err(Error::domain("LFSR needs at least two taps"));
        }
        if taps[0] != length {
            return Err(Error::domain(format!("highest tap must equal L = {length}")));
        }
        if taps.iter().any(|&t| t == 0 || t > length) {
            return Err(Error::domain(format!("taps must lie in [1, {length}]")));
        }
        Ok(LfsrSpec { length, taps })
    }

    pub fn length(&self) -> usize {
        self.length
    }

    /// Taps in descending order.
    pub fn taps(&self) -> &[usize] {
        &self.taps
    }

    /// Zero-based register indices read by the feedback.
    fn stage_indices(&self) -> Vec<usize> {
        self.taps.iter().map(|&t| self.length - t).collect()
    }
}

impl FromStr for LfsrSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("LFSR spec {s:?} is not of the form L:tap,tap,..."));
        let (len, taps) = s.trim().split_once(':').ok_or_else(bad)?;
        let length = len.trim().parse().map_err(|_| bad())?;
        let taps = taps
            .split(',')
            .map(|t| t.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        LfsrSpec::new(length, &taps)
    }
}

impl fmt::Display for LfsrSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let taps: Vec<String> = self.taps.iter().map(|t| t.to_string()).collect();
        write!(f, "{}:{}", self.length, taps.join(","))
    }
}

impl Serialize for LfsrSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for LfsrSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A deterministic source of running-key bits.
///
/// Sources are single-owner; clone one to replay the same stream.
pub trait BitSource {
    /// The next bit, or `None` once a finite source is exhausted.
    fn next_bit(&mut self) -> Option<bool>;
}

impl<T: BitSource + ?Sized> BitSource for &mut T {
    fn next_bit(&mut self) -> Option<bool> {
        (**self).next_bit()
    }
}

impl<T: BitSource + ?Sized> BitSource for Box<T> {
    fn next_bit(&mut self) -> Option<bool> {
        (**self).next_bit()
    }
}

/// A finite, pre-computed bit sequence.
#[derive(Debug, Clone)]
pub struct FixedBits {
    bits: Vec<bool>,
    pos: usize,
}

impl FixedBits {
    pub fn new(bits: Vec<bool>) -> Self {
        FixedBits { bits, pos: 0 }
    }
}

impl BitSource for FixedBits {
    fn next_bit(&mut self) -> Option<bool> {
        let b = self.bits.get(self.pos).copied();
        self.pos += 1;
        b
    }
}

/// Fibonacci LFSR keyed by a seed.
#[derive(Debug, Clone)]
pub struct Lfsr {
    register: VecDeque<bool>,
    stages: Vec<usize>,
}

impl Lfsr {
    pub fn new(spec: &LfsrSpec, seed: &SeedKey) -> Result<Self> {
        if seed.len() != spec.length() {
            return Err(Error::domain(format!(
                "seed length {} does not match LFSR length {}",
                seed.len(),
                spec.length()
            )));
        }
        if seed.is_zero() {
            return Err(Error::domain("all-zero seed is a fixed point of the LFSR"));
        }
        Ok(Lfsr {
            register: seed.bits().iter().copied().collect(),
            stages: spec.stage_indices(),
        })
    }

    /// Register contents, stage 1 first.
    pub fn state(&self) -> Vec<bool> {
        self.register.iter().copied().collect()
    }

    pub fn step(&mut self) -> bool {
        let feedback = self
            .stages
            .iter()
            .fold(false, |acc, &i| acc ^ self.register[i]);
        let out = self.register.pop_front().expect("nonempty register");
        self.register.push_back(feedback);
        out
    }
}

impl BitSource for Lfsr {
    fn next_bit(&mut self) -> Option<bool> {
        Some(self.step())
    }
}

impl Iterator for Lfsr {
    type Item = bool;

    fn next(&mut self) -> Option<bool> {
        Some(self.step())
    }
}

/// The first `count` output bits of the LFSR.
pub fn lfsr_stream(spec: &LfsrSpec, seed: &SeedKey, count: usize) -> Result<Vec<bool>> {
    Ok(Lfsr::new(spec, seed)?.take(count).collect())
}

/// Largest register length accepted by [`lfsr_period`].
pub const MAX_PERIOD_LENGTH: usize = 24;

/// Smallest `T > 0` with the register back in its seed state, by direct
/// simulation on a packed register.
pub fn lfsr_period(spec: &LfsrSpec, seed: &SeedKey) -> Result<u64> {
    if spec.length() > MAX_PERIOD_LENGTH {
        return Err(Error::Unsupported(format!(
            "period search limited to L <= {MAX_PERIOD_LENGTH}, got {}",
            spec.length()
        )));
    }
    // Validates the seed.
    Lfsr::new(spec, seed)?;

    let l = spec.length();
    let mask: u32 = spec.stage_indices().iter().fold(0, |m, &i| m | (1 << i));
    let start: u32 = seed
        .bits()
        .iter()
        .enumerate()
        .fold(0, |s, (i, &b)| s | ((b as u32) << i));

    let mut state = start;
    let mut t = 0u64;
    loop {
        let feedback = (state & mask).count_ones() & 1;
        state = (state >> 1) | (feedback << (l - 1));
        t += 1;
        if state == start {
            return Ok(t);
        }
        // A nonsingular register is a permutation, so this bound is never hit.
        if t > 1u64 << l {
            return Err(Error::domain("register does not return to its seed state"));
        }
    }
}

/// Per-qubit basis selectors, each below the alphabet size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunningKey {
    selectors: Vec<u32>,
    alphabet: BasisAlphabet,
}

impl RunningKey {
    pub fn new(selectors: Vec<u32>, alphabet: BasisAlphabet) -> Result<Self> {
        if let Some(&bad) = selectors.iter().find(|&&s| s >= alphabet.m()) {
            return Err(Error::domain(format!(
                "selector {bad} out of range for m = {}",
                alphabet.m()
            )));
        }
        Ok(RunningKey { selectors, alphabet })
    }

    pub fn selectors(&self) -> &[u32] {
        &self.selectors
    }

    pub fn alphabet(&self) -> BasisAlphabet {
        self.alphabet
    }

    pub fn len(&self) -> usize {
        self.selectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selectors.is_empty()
    }
}

/// Groups `log2(m)` source bits, most significant first, into each of `n`
/// selectors.
pub fn expand_running_key<S: BitSource + ?Sized>(
    source: &mut S,
    n: usize,
    alphabet: BasisAlphabet,
) -> Result<RunningKey> {
    let width = alphabet.bits_per_selector() as usize;
    let requested = n * width;
    let mut selectors = Vec::with_capacity(n);
    let mut produced = 0;
    for _ in 0..n {
        let mut sel = 0u32;
        for _ in 0..width {
            let bit = source
                .next_bit()
                .ok_or(Error::Exhausted { produced, requested })?;
            produced += 1;
            sel = (sel << 1) | bit as u32;
        }
        selectors.push(sel);
    }
    RunningKey::new(selectors, alphabet)
}

/// Repeats each key bit over a contiguous block of `⌈n / m_k⌉` qubits; the
/// last block is truncated when `m_k` does not divide `n`.
pub fn repetition_running_key(key: &SeedKey, n: usize) -> RunningKey {
    let block = n.div_ceil(key.len()).max(1);
    let selectors = (0..n).map(|i| key.bits()[i / block] as u32).collect();
    RunningKey {
        selectors,
        alphabet: BasisAlphabet::bb84(),
    }
}
