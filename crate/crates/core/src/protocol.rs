//! The keyed-basis key generation protocol.
//!
//! A run has three phases:
//!
//! 1. Alice sends `n` random bits, each in the basis picked by the running key
//!    expanded from the shared seed. Bob measures in the same basis, so every
//!    detected qubit yields a bit and nothing is sifted away.
//! 2. A disclosed 5% sample estimates the channel error rate. The rate gate
//!    checks the code rate against the users' and Eve's capacities, then an
//!    idealized reconciliation and Toeplitz privacy amplification produce the
//!    generated key.
//! 3. Both sides exchange a one-time-padded keyed hash of the key to verify
//!    that they agree.
//!
//! The [`KeyLedger`] subtracts all secret key spent during the run (seed and
//! verification key) from the generated key.
//!
//! Direct encryption ([`run_direct_encryption`]) sends coded data instead
//! of random bits and replaces verification with message authentication.

use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{eve_capacity, h2_unchecked, rate_window};
use crate::keystream::{expand_running_key, repetition_running_key, Lfsr, LfsrSpec, RunningKey, SeedKey};
use crate::qubit::{encode_state, measure, BasisAlphabet, StateAngle};
use crate::serde_fmt::{ser_bits_hex, ser_sig9};
use crate::{Error, Result};

/// Reconciliation succeeds only with this much slack below the Shannon limit.
pub const RECONCILE_MARGIN: f64 = 0.02;

/// Fraction of detected bits disclosed to estimate the channel error rate.
pub const QBER_SAMPLE_FRACTION: f64 = 0.05;

/// Bit-flip and erasure channel between the users.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelModel {
    /// Per-qubit flip probability, applied as a rotation by π/2.
    pub p_c: f64,
    /// Per-qubit erasure probability.
    pub loss: f64,
}

impl ChannelModel {
    pub const NOISELESS: ChannelModel = ChannelModel { p_c: 0.0, loss: 0.0 };

    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.p_c) {
            return Err(Error::domain(format!("p_c = {} outside [0, 0.5)", self.p_c)));
        }
        if !(0.0..1.0).contains(&self.loss) {
            return Err(Error::domain(format!("loss = {} outside [0, 1)", self.loss)));
        }
        Ok(())
    }
}

/// Which generator expands the seed key into the running key.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KeystreamConfig {
    Lfsr { lfsr: LfsrSpec, seed: SeedKey },
    /// Block repetition of a key; only defined for the four-state alphabet.
    Repetition { key: SeedKey },
}

impl KeystreamConfig {
    /// Secret bits this keystream consumes.
    pub fn seed_len(&self) -> usize {
        match self {
            KeystreamConfig::Lfsr { seed, .. } => seed.len(),
            KeystreamConfig::Repetition { key } => key.len(),
        }
    }

    pub fn running_key(&self, n: usize, alphabet: BasisAlphabet) -> Result<RunningKey> {
        match self {
            KeystreamConfig::Lfsr { lfsr, seed } => {
                expand_running_key(&mut Lfsr::new(lfsr, seed)?, n, alphabet)
            }
            KeystreamConfig::Repetition { key } => {
                if alphabet.m() != 2 {
                    return Err(Error::domain("repetition keystream requires m = 2"));
                }
                Ok(repetition_running_key(key, n))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    KeyGeneration,
    DirectEncryption,
}

/// Everything needed to reproduce a protocol run, together with a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub n: usize,
    pub m: BasisAlphabet,
    pub keystream: KeystreamConfig,
    pub channel: ChannelModel,
    pub code_rate: f64,
    pub pa_security_param: usize,
    pub verification_len: usize,
    pub mode: Mode,
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::domain("n must be at least 1"));
        }
        if !(self.code_rate > 0.0 && self.code_rate < 1.0) {
            return Err(Error::domain(format!("code rate {} outside (0, 1)", self.code_rate)));
        }
        if self.verification_len == 0 {
            return Err(Error::domain("verification length must be at least 1"));
        }
        self.channel.validate()?;
        if let KeystreamConfig::Lfsr { lfsr, seed } = &self.keystream {
            Lfsr::new(lfsr, seed)?;
        }
        if matches!(self.keystream, KeystreamConfig::Repetition { .. }) && self.m.m() != 2 {
            return Err(Error::domain("repetition keystream requires m = 2"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: ProtocolConfig =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn alphabet(&self) -> BasisAlphabet {
        self.m
    }
}

/// Secret-key accounting for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyLedger {
    pub consumed_seed: u64,
    pub consumed_verification: u64,
    pub generated: u64,
    pub net: i64,
}

impl KeyLedger {
    pub fn new(consumed_seed: u64, consumed_verification: u64, generated: u64) -> Self {
        let net = generated as i64 - (consumed_seed + consumed_verification) as i64;
        KeyLedger {
            consumed_seed,
            consumed_verification,
            generated,
            net,
        }
    }

    pub fn consumed(&self) -> u64 {
        self.consumed_seed + self.consumed_verification
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    NoDetections,
    RateGate,
    Reconcile,
    Verification,
}

impl AbortReason {
    pub fn as_str(self) -> &'static str {
        match self {
            AbortReason::NoDetections => "no_detections",
            AbortReason::RateGate => "rate_gate",
            AbortReason::Reconcile => "reconcile",
            AbortReason::Verification => "verification",
        }
    }
}

/// Result of [`run_protocol`]. Keys serialize as hex, MSB first, with the bit
/// length in `key_len`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProtocolOutcome {
    #[serde(serialize_with = "ser_bits_hex")]
    pub alice_key: Vec<bool>,
    #[serde(serialize_with = "ser_bits_hex")]
    pub bob_key: Vec<bool>,
    pub key_len: usize,
    #[serde(serialize_with = "ser_sig9")]
    pub qber_raw: f64,
    pub detected_positions: Vec<usize>,
    pub verified: bool,
    pub ledger: KeyLedger,
    pub abort_reason: Option<AbortReason>,
}

impl ProtocolOutcome {
    /// Compact JSON; the detected-position list makes pretty output unwieldy.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("outcome serializes")
    }
}

/// Bits of one transmission, aligned over the detected positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFrame {
    pub alice: Vec<bool>,
    pub bob: Vec<bool>,
    pub detected: Vec<usize>,
}

impl RawFrame {
    pub fn len(&self) -> usize {
        self.detected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detected.is_empty()
    }

    pub fn errors(&self) -> usize {
        self.alice.iter().zip(&self.bob).filter(|(a, b)| a != b).count()
    }

    pub fn error_rate(&self) -> f64 {
        if self.is_empty() {
            0.0
        } else {
            self.errors() as f64 / self.len() as f64
        }
    }
}

/// Hook that sees each qubit between Alice and the channel.
pub trait Interceptor {
    /// Returns the state forwarded to the channel.
    fn intercept(&mut self, index: usize, sent: StateAngle, rng: &mut dyn RngCore) -> StateAngle;
}

/// Forwards every qubit untouched.
#[derive(Debug, Clone, Copy, Default)]
pub struct Passive;

impl Interceptor for Passive {
    fn intercept(&mut self, _index: usize, sent: StateAngle, _rng: &mut dyn RngCore) -> StateAngle {
        sent
    }
}

/// Sends `data[i]` in basis `key[i]` through the interceptor and channel and
/// measures each surviving qubit in the keyed basis.
pub fn transmit<R: Rng>(
    data: &[bool],
    key: &RunningKey,
    channel: &ChannelModel,
    interceptor: &mut dyn Interceptor,
    rng: &mut R,
) -> Result<RawFrame> {
    if data.len() != key.len() {
        return Err(Error::domain("data and running key lengths differ"));
    }
    let alphabet = key.alphabet();
    let mut frame = RawFrame {
        alice: Vec::with_capacity(data.len()),
        bob: Vec::with_capacity(data.len()),
        detected: Vec::with_capacity(data.len()),
    };
    for (i, (&bit, &sel)) in data.iter().zip(key.selectors()).enumerate() {
        let sent = encode_state(bit, sel, alphabet)?;
        let mut state = interceptor.intercept(i, sent, rng);
        if rng.gen::<f64>() < channel.loss {
            continue;
        }
        if rng.gen::<f64>() < channel.p_c {
            state = state.orthogonal();
        }
        let received = measure(state, alphabet.basis(sel), rng);
        frame.alice.push(bit);
        frame.bob.push(received);
        frame.detected.push(i);
    }
    Ok(frame)
}

/// Step one of the protocol with no eavesdropper.
pub fn transmit_round<R: Rng>(config: &ProtocolConfig, rng: &mut R) -> Result<RawFrame> {
    config.validate()?;
    let key = config.keystream.running_key(config.n, config.alphabet())?;
    let data: Vec<bool> = (0..config.n).map(|_| rng.gen()).collect();
    transmit(&data, &key, &config.channel, &mut Passive, rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RateVerdict {
    Ok,
    /// `R ≥ 1 − h2(p_c)`: the users cannot correct their errors.
    RateTooHigh,
    /// `R ≤ 1 − h2(0.15)`: the rate does not exceed Eve's capacity.
    RateTooLowForSecurity,
}

/// Checks the code rate against the window `(1 − h2(0.15), 1 − h2(p_c))`.
/// When both inequalities fail the decodability failure is reported.
pub fn rate_gate(p_c_hat: f64, rate: f64) -> Result<RateVerdict> {
    if !(0.0..=1.0).contains(&p_c_hat) {
        return Err(Error::domain(format!("error rate {p_c_hat} outside [0, 1]")));
    }
    if p_c_hat >= 0.5 {
        return Ok(RateVerdict::RateTooHigh);
    }
    let window = rate_window(p_c_hat)?;
    Ok(if rate >= window.upper {
        RateVerdict::RateTooHigh
    } else if rate <= window.lower {
        RateVerdict::RateTooLowForSecurity
    } else {
        RateVerdict::Ok
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reconciliation {
    pub corrected: Vec<bool>,
    pub leaked_bits: usize,
    pub success: bool,
}

/// Idealized reconciliation at the Shannon limit: succeeds iff
/// `h2(e) ≤ (1 − R) − 0.02` for the actual error rate `e`, in which case Bob
/// ends up with Alice's bits and `⌈ℓ(1 − R)⌉` syndrome bits were disclosed.
pub fn reconcile(alice: &[bool], bob: &[bool], rate: f64) -> Result<Reconciliation> {
    if alice.len() != bob.len() {
        return Err(Error::domain(format!(
            "reconcile inputs differ in length: {} vs {}",
            alice.len(),
            bob.len()
        )));
    }
    let len = alice.len();
    let errors = alice.iter().zip(bob).filter(|(a, b)| a != b).count();
    let e = if len == 0 { 0.0 } else { errors as f64 / len as f64 };
    let success = rate < 1.0 && h2_unchecked(e) <= (1.0 - rate) - RECONCILE_MARGIN;
    if !success {
        return Ok(Reconciliation {
            corrected: bob.to_vec(),
            leaked_bits: 0,
            success: false,
        });
    }
    Ok(Reconciliation {
        corrected: alice.to_vec(),
        leaked_bits: (len as f64 * (1.0 - rate) - 1e-9).ceil().max(0.0) as usize,
        success: true,
    })
}

fn pack(bits: &[bool], extra_words: usize) -> Vec<u64> {
    let mut words = vec![0u64; bits.len().div_ceil(64) + extra_words];
    for (i, &b) in bits.iter().enumerate() {
        if b {
            words[i / 64] |= 1 << (i % 64);
        }
    }
    words
}

/// Binary Toeplitz hash: `out[i] = ⊕_j T[i][j]·bits[j]` with
/// `T[i][j] = seed[i − j + len − 1]`. The seed must hold
/// `len + out_len − 1` bits.
pub fn privacy_amplify(bits: &[bool], out_len: usize, seed: &[bool]) -> Result<Vec<bool>> {
    let len = bits.len();
    if out_len > len {
        return Err(Error::domain(format!(
            "output length {out_len} exceeds input length {len}"
        )));
    }
    if out_len == 0 {
        return Ok(Vec::new());
    }
    if seed.len() != len + out_len - 1 {
        return Err(Error::domain(format!(
            "Toeplitz seed must have {} bits, got {}",
            len + out_len - 1,
            seed.len()
        )));
    }
    // With y[k] = bits[len − 1 − k]: out[i] = ⊕_k seed[i + k]·y[k].
    let reversed: Vec<bool> = bits.iter().rev().copied().collect();
    let y = pack(&reversed, 0);
    let s = pack(seed, 1);
    let out = (0..out_len)
        .map(|i| {
            let (q, r) = (i / 64, i % 64);
            let parity = y.iter().enumerate().fold(0u32, |acc, (w, &yw)| {
                let lo = s[q + w] >> r;
                let hi = if r == 0 { 0 } else { s[q + w + 1] << (64 - r) };
                acc ^ ((lo | hi) & yw).count_ones()
            });
            parity & 1 == 1
        })
        .collect();
    Ok(out)
}

/// Final key length after privacy amplification:
/// `max(0, ⌊ℓ·(R − C_E)⌋ − s)` with `C_E` Eve's fixed-basis capacity.
pub fn pa_output_length(len: usize, rate: f64, alphabet: BasisAlphabet, security_bits: usize) -> usize {
    let margin = rate - eve_capacity(alphabet);
    let raw = (len as f64 * margin + 1e-9).floor();
    (raw as i64 - security_bits as i64).max(0) as usize
}

/// Deterministic Toeplitz diagonal expanded from a secret selector.
fn expand_selector(selector: &[bool], bits: usize) -> Vec<bool> {
    let mut seed = [0u8; 32];
    for (i, &b) in selector.iter().enumerate() {
        if b {
            seed[(i / 8) % 32] ^= 1 << (i % 8);
        }
    }
    // Mix in the selector length so prefixes of longer selectors differ.
    seed[31] ^= (selector.len() % 251) as u8;
    let mut rng = ChaCha8Rng::from_seed(seed);
    (0..bits).map(|_| rng.gen()).collect()
}

/// The one-time-padded verification tag of `key`.
pub fn verification_tag(key: &[bool], verification_key: &[bool]) -> Result<Vec<bool>> {
    if verification_key.is_empty() || !verification_key.len().is_multiple_of(2) {
        return Err(Error::domain("verification key must have 2·|K_v| > 0 bits"));
    }
    let kv = verification_key.len() / 2;
    let (selector, pad) = verification_key.split_at(kv);
    let hash = if key.is_empty() {
        vec![false; kv]
    } else {
        let diag = expand_selector(selector, key.len() + kv - 1);
        toeplitz_wide(key, kv, &diag)
    };
    Ok(hash.iter().zip(pad).map(|(h, p)| h ^ p).collect())
}

// Toeplitz hash that allows an output longer than the input.
fn toeplitz_wide(key: &[bool], out_len: usize, diag: &[bool]) -> Vec<bool> {
    if out_len <= key.len() {
        return privacy_amplify(key, out_len, diag).expect("lengths checked");
    }
    let len = key.len();
    (0..out_len)
        .map(|i| (0..len).fold(false, |acc, j| acc ^ (diag[i + len - 1 - j] & key[j])))
        .collect()
}

/// Both users tag their key with the shared verification key and compare
/// tags. `verification_key` holds `|K_v|` hash-selector bits followed by a
/// `|K_v|`-bit one-time pad.
pub fn verify_key(alice: &[bool], bob: &[bool], verification_key: &[bool]) -> Result<bool> {
    if alice.len() != bob.len() {
        return Ok(false);
    }
    Ok(verification_tag(alice, verification_key)? == verification_tag(bob, verification_key)?)
}

/// Splits off a random disclosed sample; returns the sample error rate and
/// the indices (into the frame) left for key material.
pub fn estimate_qber<R: Rng>(frame: &RawFrame, rng: &mut R) -> (f64, Vec<usize>) {
    let len = frame.len();
    if len == 0 {
        return (0.0, Vec::new());
    }
    let k = ((len as f64 * QBER_SAMPLE_FRACTION).ceil() as usize).clamp(1, len);
    let mut disclosed = vec![false; len];
    for i in sample(rng, len, k).iter() {
        disclosed[i] = true;
    }
    let errors = (0..len)
        .filter(|&i| disclosed[i] && frame.alice[i] != frame.bob[i])
        .count();
    let kept = (0..len).filter(|&i| !disclosed[i]).collect();
    (errors as f64 / k as f64, kept)
}

/// Runs the full key generation protocol without an eavesdropper.
pub fn run_protocol<R: Rng>(config: &ProtocolConfig, rng: &mut R) -> Result<ProtocolOutcome> {
    run_protocol_with(config, &mut Passive, rng)
}

/// Runs the full key generation protocol with `interceptor` on the line.
pub fn run_protocol_with<R: Rng>(
    config: &ProtocolConfig,
    interceptor: &mut dyn Interceptor,
    rng: &mut R,
) -> Result<ProtocolOutcome> {
    config.validate()?;
    if config.mode != Mode::KeyGeneration {
        return Err(Error::domain("run_protocol requires key-generation mode"));
    }
    let alphabet = config.alphabet();
    let running_key = config.keystream.running_key(config.n, alphabet)?;
    let data: Vec<bool> = (0..config.n).map(|_| rng.gen()).collect();
    let frame = transmit(&data, &running_key, &config.channel, interceptor, rng)?;

    let mut outcome = ProtocolOutcome {
        alice_key: Vec::new(),
        bob_key: Vec::new(),
        key_len: 0,
        qber_raw: 0.0,
        detected_positions: frame.detected.clone(),
        verified: false,
        ledger: KeyLedger::new(
            config.keystream.seed_len() as u64,
            2 * config.verification_len as u64,
            0,
        ),
        abort_reason: None,
    };
    let abort = |mut o: ProtocolOutcome, reason| {
        o.abort_reason = Some(reason);
        o
    };

    if frame.is_empty() {
        return Ok(abort(outcome, AbortReason::NoDetections));
    }

    let (qber, kept) = estimate_qber(&frame, rng);
    outcome.qber_raw = qber;
    if rate_gate(qber, config.code_rate)? != RateVerdict::Ok {
        return Ok(abort(outcome, AbortReason::RateGate));
    }

    let alice: Vec<bool> = kept.iter().map(|&i| frame.alice[i]).collect();
    let bob: Vec<bool> = kept.iter().map(|&i| frame.bob[i]).collect();
    let rec = reconcile(&alice, &bob, config.code_rate)?;
    if !rec.success {
        return Ok(abort(outcome, AbortReason::Reconcile));
    }

    let out_len = pa_output_length(alice.len(), config.code_rate, alphabet, config.pa_security_param);
    let (alice_key, bob_key) = if out_len == 0 {
        (Vec::new(), Vec::new())
    } else {
        let pa_seed: Vec<bool> = (0..alice.len() + out_len - 1).map(|_| rng.gen()).collect();
        (
            privacy_amplify(&alice, out_len, &pa_seed)?,
            privacy_amplify(&rec.corrected, out_len, &pa_seed)?,
        )
    };

    let verification_key: Vec<bool> = (0..2 * config.verification_len).map(|_| rng.gen()).collect();
    if !verify_key(&alice_key, &bob_key, &verification_key)? {
        return Ok(abort(outcome, AbortReason::Verification));
    }

    outcome.ledger = KeyLedger::new(
        outcome.ledger.consumed_seed,
        outcome.ledger.consumed_verification,
        alice_key.len() as u64,
    );
    outcome.key_len = alice_key.len();
    outcome.alice_key = alice_key;
    outcome.bob_key = bob_key;
    outcome.verified = true;
    Ok(outcome)
}

/// Result of [`run_direct_encryption`].
#[derive(Debug, Clone, PartialEq)]
pub struct DirectOutcome {
    /// The qubit states Alice put on the line.
    pub transcript: Vec<StateAngle>,
    pub recovered: Vec<bool>,
    pub verified: bool,
    pub abort_reason: Option<AbortReason>,
}

/// Sends `plaintext` over the keyed-basis channel with error-control coding
/// and message authentication, without privacy amplification.
pub fn run_direct_encryption<R: Rng>(
    config: &ProtocolConfig,
    plaintext: &[bool],
    rng: &mut R,
) -> Result<DirectOutcome> {
    run_direct_encryption_with(config, plaintext, &mut Passive, rng)
}

pub fn run_direct_encryption_with<R: Rng>(
    config: &ProtocolConfig,
    plaintext: &[bool],
    interceptor: &mut dyn Interceptor,
    rng: &mut R,
) -> Result<DirectOutcome> {
    config.validate()?;
    if config.mode != Mode::DirectEncryption {
        return Err(Error::domain("direct encryption requires direct-encryption mode"));
    }
    let n = config.n;
    let parity_len = (n as f64 * (1.0 - config.code_rate) - 1e-9).ceil() as usize;
    let capacity = n - parity_len;
    if plaintext.len() > capacity {
        return Err(Error::domain(format!(
            "plaintext of {} bits exceeds the {capacity} message bits of a rate-{} block",
            plaintext.len(),
            config.code_rate
        )));
    }

    // Idealized code: message bits, zero padding, then an abstract parity block.
    let mut codeword = plaintext.to_vec();
    codeword.resize(capacity, false);
    codeword.extend((0..parity_len).map(|_| rng.gen::<bool>()));

    let alphabet = config.alphabet();
    let running_key = config.keystream.running_key(n, alphabet)?;
    let transcript = codeword
        .iter()
        .zip(running_key.selectors())
        .map(|(&b, &s)| encode_state(b, s, alphabet))
        .collect::<Result<Vec<_>>>()?;
    let frame = transmit(&codeword, &running_key, &config.channel, interceptor, rng)?;

    // Erasures raise the effective rate of the code on the surviving bits.
    let effective_rate = if frame.is_empty() {
        1.0
    } else {
        (config.code_rate * n as f64 / frame.len() as f64).min(1.0)
    };
    let rec = reconcile(&frame.alice, &frame.bob, effective_rate)?;
    let auth_key: Vec<bool> = (0..2 * config.verification_len).map(|_| rng.gen()).collect();

    if !rec.success {
        let mut guess = vec![false; plaintext.len()];
        for (&pos, &b) in frame.detected.iter().zip(&frame.bob) {
            if pos < guess.len() {
                guess[pos] = b;
            }
        }
        return Ok(DirectOutcome {
            transcript,
            recovered: guess,
            verified: false,
            abort_reason: Some(AbortReason::Reconcile),
        });
    }

    let recovered = plaintext.to_vec();
    let verified = verify_key(plaintext, &recovered, &auth_key)?;
    Ok(DirectOutcome {
        transcript,
        recovered,
        verified,
        abort_reason: (!verified).then_some(AbortReason::Verification),
    })
}
