//! Eavesdropping strategies with analytic and Monte Carlo statistics.
//!
//! Active attacks are measure-resend: Eve measures each attacked qubit and
//! forwards the state matching her outcome. After the run she is granted the
//! true running key and decodes her stored outcomes by maximum likelihood,
//! which bounds what any fixed per-qubit measurement can learn.
//!
//! Monte Carlo runs are split into independent trials. Trial `t` draws from
//! a generator seeded with `seed + t` and trial tallies are summed, so
//! reports do not depend on how many threads ran them.

use std::f64::consts::FRAC_PI_8;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{binomial_ci, Estimate};
use crate::keystream::{expand_running_key, repetition_running_key, Lfsr, RunningKey, SeedKey};
use crate::protocol::{transmit, ChannelModel, Interceptor, KeystreamConfig, ProtocolConfig};
use crate::qubit::{
    density_of_mixture, encode_state, eve_error_key_granted, measure, outcome_probability,
    BasisAlphabet, DensityMatrix, MeasBasis, StateAngle,
};
use crate::serde_fmt::{ser_opt_sig9, ser_sig9};
use crate::{seeded_rng, Error, Result, SimRng};

/// An eavesdropping strategy, parseable from `intercept[:fraction]`,
/// `fixed:<phi>`, `breidbart`, `keyguess` or `blockguess:<k>`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttackStrategy {
    /// Measure a random fraction of qubits in a uniformly random BB84 basis.
    InterceptResend { fraction: f64 },
    /// Measure every qubit in one fixed basis.
    FixedBasis(MeasBasis),
    /// Guess the seed key, then measure in the guessed bases.
    KeyGuess,
    /// Guess the repeated key bit of the first `k_blocks` blocks.
    BlockGuess { k_blocks: usize },
}

impl AttackStrategy {
    /// The fixed basis bisecting adjacent BB84 states.
    pub fn breidbart() -> Self {
        AttackStrategy::FixedBasis(MeasBasis::new(FRAC_PI_8))
    }
}

impl FromStr for AttackStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("unknown attack strategy {s:?}"));
        let (name, arg) = match s.trim().split_once(':') {
            Some((n, a)) => (n, Some(a.trim())),
            None => (s.trim(), None),
        };
        let strategy = match (name, arg) {
            ("intercept", None) => AttackStrategy::InterceptResend { fraction: 1.0 },
            ("intercept", Some(a)) => {
                let fraction: f64 = a.parse().map_err(|_| bad())?;
                if !(0.0..=1.0).contains(&fraction) {
                    return Err(Error::domain(format!("fraction {fraction} outside [0, 1]")));
                }
                AttackStrategy::InterceptResend { fraction }
            }
            ("fixed", Some(a)) => {
                let phi: f64 = a.parse().map_err(|_| bad())?;
                if !phi.is_finite() {
                    return Err(bad());
                }
                AttackStrategy::FixedBasis(MeasBasis::new(phi))
            }
            ("breidbart", None) => AttackStrategy::breidbart(),
            ("keyguess", None) => AttackStrategy::KeyGuess,
            ("blockguess", Some(a)) => {
                let k_blocks: usize = a.parse().map_err(|_| bad())?;
                if k_blocks == 0 {
                    return Err(Error::domain("block guess needs at least one block"));
                }
                AttackStrategy::BlockGuess { k_blocks }
            }
            _ => return Err(bad()),
        };
        Ok(strategy)
    }
}

impl fmt::Display for AttackStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttackStrategy::InterceptResend { fraction } if *fraction == 1.0 => f.write_str("intercept"),
            AttackStrategy::InterceptResend { fraction } => write!(f, "intercept:{fraction}"),
            AttackStrategy::FixedBasis(b) => write!(f, "fixed:{}", b.phi()),
            AttackStrategy::KeyGuess => f.write_str("keyguess"),
            AttackStrategy::BlockGuess { k_blocks } => write!(f, "blockguess:{k_blocks}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SuccessProbability {
    #[serde(serialize_with = "ser_opt_sig9")]
    pub analytic: Option<f64>,
    pub mc: Option<Estimate>,
}

/// Statistics of one attack. Intervals are 4σ.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackReport {
    pub strategy: String,
    pub trials: u64,
    /// Qubits Eve measured, summed over trials.
    pub attacked_qubits: u64,
    /// Eve's decoding error on the qubits she measured, after the running key
    /// is granted to her.
    pub eve_bit_error: Estimate,
    #[serde(serialize_with = "ser_opt_sig9")]
    pub eve_bit_error_analytic: Option<f64>,
    pub induced_qber: Estimate,
    #[serde(serialize_with = "ser_opt_sig9")]
    pub induced_qber_analytic: Option<f64>,
    pub success_probability: SuccessProbability,
    /// Fraction of the data bits Eve learns when the attack succeeds.
    #[serde(serialize_with = "ser_sig9")]
    pub info_fraction: f64,
}

impl AttackReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Integer counts from one or more trials; merged by summation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub trials: u64,
    pub successes: u64,
    pub eve_errors: u64,
    pub eve_bits: u64,
    pub qber_errors: u64,
    pub qber_bits: u64,
    /// Successful trials that still showed an error on an attacked position.
    pub successes_with_errors: u64,
}

impl std::ops::Add for Tally {
    type Output = Tally;

    fn add(self, o: Tally) -> Tally {
        Tally {
            trials: self.trials + o.trials,
            successes: self.successes + o.successes,
            eve_errors: self.eve_errors + o.eve_errors,
            eve_bits: self.eve_bits + o.eve_bits,
            qber_errors: self.qber_errors + o.qber_errors,
            qber_bits: self.qber_bits + o.qber_bits,
            successes_with_errors: self.successes_with_errors + o.successes_with_errors,
        }
    }
}

/// Runs `trials` independent trials in parallel; trial `t` uses seed `seed + t`.
pub fn run_trials<F>(trials: u64, seed: u64, trial: F) -> Result<Tally>
where
    F: Fn(&mut SimRng) -> Result<Tally> + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|t| trial(&mut seeded_rng(seed.wrapping_add(t))))
        .try_reduce(Tally::default, |a, b| Ok(a + b))
}

fn rate(errors: u64, bits: u64) -> Result<Estimate> {
    if bits == 0 {
        return Ok(Estimate {
            value: 0.0,
            half_width: 0.0,
        });
    }
    binomial_ci(errors, bits)
}

/// Maximum-likelihood bit from an outcome in basis `phi` once the encoding
/// basis `theta` is known.
fn ml_decode(outcome: bool, theta: f64, phi: MeasBasis) -> bool {
    let aligned = outcome_probability(StateAngle::new(theta), phi) >= 0.5;
    outcome ^ !aligned
}

/// Channel noise applied after an attack that alone induces error `q`.
fn through_channel(q: f64, channel: &ChannelModel) -> f64 {
    q * (1.0 - 2.0 * channel.p_c) + channel.p_c
}

/// Measure-resend in a per-position basis on a set of positions.
struct ResendInBases<'a> {
    bases: &'a dyn Fn(usize) -> Option<MeasBasis>,
    outcomes: Vec<Option<(MeasBasis, bool)>>,
}

impl<'a> ResendInBases<'a> {
    fn new(n: usize, bases: &'a dyn Fn(usize) -> Option<MeasBasis>) -> Self {
        ResendInBases {
            bases,
            outcomes: vec![None; n],
        }
    }

    /// Eve's errors after being granted the true running key, over the
    /// positions she measured.
    fn decode_errors(&self, data: &[bool], key: &RunningKey) -> (u64, u64) {
        let alphabet = key.alphabet();
        let mut errors = 0;
        let mut bits = 0;
        for (i, rec) in self.outcomes.iter().enumerate() {
            if let Some((basis, outcome)) = rec {
                let theta = alphabet.basis_angle(key.selectors()[i]);
                errors += (ml_decode(*outcome, theta, *basis) != data[i]) as u64;
                bits += 1;
            }
        }
        (errors, bits)
    }
}

impl Interceptor for ResendInBases<'_> {
    fn intercept(&mut self, index: usize, sent: StateAngle, rng: &mut dyn RngCore) -> StateAngle {
        match (self.bases)(index) {
            Some(basis) => {
                let outcome = measure(sent, basis, rng);
                self.outcomes[index] = Some((basis, outcome));
                basis.outcome_state(outcome)
            }
            None => sent,
        }
    }
}

struct FrameStats {
    eve_errors: u64,
    eve_bits: u64,
    qber_errors: u64,
    qber_bits: u64,
}

fn attacked_frame<R: Rng>(
    data: &[bool],
    key: &RunningKey,
    channel: &ChannelModel,
    bases: &dyn Fn(usize) -> Option<MeasBasis>,
    rng: &mut R,
) -> Result<FrameStats> {
    let mut eve = ResendInBases::new(data.len(), bases);
    let frame = transmit(data, key, channel, &mut eve, rng)?;
    let (eve_errors, eve_bits) = eve.decode_errors(data, key);
    Ok(FrameStats {
        eve_errors,
        eve_bits,
        qber_errors: frame.errors() as u64,
        qber_bits: frame.len() as u64,
    })
}

fn random_data<R: Rng>(n: usize, rng: &mut R) -> Vec<bool> {
    (0..n).map(|_| rng.gen()).collect()
}

/// Opaque attack on a random `fraction` of the qubits, each measured in a
/// uniformly random BB84 basis. One trial is one frame of `config.n` qubits.
pub fn attack_intercept_resend(
    config: &ProtocolConfig,
    fraction: f64,
    trials: u64,
    seed: u64,
) -> Result<AttackReport> {
    config.validate()?;
    let alphabet = config.alphabet();
    if alphabet.m() != 2 {
        return Err(Error::domain("intercept-resend is defined for m = 2"));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::domain(format!("fraction {fraction} outside [0, 1]")));
    }
    let key = config.keystream.running_key(config.n, alphabet)?;

    let tally = run_trials(trials, seed, |rng| {
        let data = random_data(config.n, rng);
        let choices: Vec<Option<MeasBasis>> = (0..config.n)
            .map(|_| (rng.gen::<f64>() < fraction).then(|| alphabet.basis(rng.gen_range(0..2))))
            .collect();
        let s = attacked_frame(&data, &key, &config.channel, &|i| choices[i], rng)?;
        Ok(Tally {
            trials: 1,
            eve_errors: s.eve_errors,
            eve_bits: s.eve_bits,
            qber_errors: s.qber_errors,
            qber_bits: s.qber_bits,
            ..Tally::default()
        })
    })?;

    Ok(AttackReport {
        strategy: AttackStrategy::InterceptResend { fraction }.to_string(),
        trials,
        attacked_qubits: tally.eve_bits,
        eve_bit_error: rate(tally.eve_errors, tally.eve_bits)?,
        eve_bit_error_analytic: Some(0.25),
        induced_qber: rate(tally.qber_errors, tally.qber_bits)?,
        induced_qber_analytic: Some(through_channel(0.25 * fraction, &config.channel)),
        success_probability: SuccessProbability {
            analytic: None,
            mc: None,
        },
        info_fraction: fraction,
    })
}

/// User error rate induced by measure-resend in a fixed basis `phi`:
/// the average over bases of `½·sin²(2(θⱼ − φ))`.
pub fn fixed_basis_induced_qber(phi: MeasBasis, alphabet: BasisAlphabet) -> f64 {
    alphabet
        .angles()
        .map(|theta| 0.5 * (2.0 * (theta - phi.phi())).sin().powi(2))
        .sum::<f64>()
        / f64::from(alphabet.m())
}

/// Every qubit measured in basis `phi` and resent. One trial is one frame of
/// `config.n` qubits.
pub fn attack_fixed_basis(
    config: &ProtocolConfig,
    phi: MeasBasis,
    trials: u64,
    seed: u64,
) -> Result<AttackReport> {
    config.validate()?;
    let alphabet = config.alphabet();
    let key = config.keystream.running_key(config.n, alphabet)?;

    let tally = run_trials(trials, seed, |rng| {
        let data = random_data(config.n, rng);
        let s = attacked_frame(&data, &key, &config.channel, &|_| Some(phi), rng)?;
        Ok(Tally {
            trials: 1,
            eve_errors: s.eve_errors,
            eve_bits: s.eve_bits,
            qber_errors: s.qber_errors,
            qber_bits: s.qber_bits,
            ..Tally::default()
        })
    })?;

    Ok(AttackReport {
        strategy: AttackStrategy::FixedBasis(phi).to_string(),
        trials,
        attacked_qubits: tally.eve_bits,
        eve_bit_error: rate(tally.eve_errors, tally.eve_bits)?,
        eve_bit_error_analytic: Some(eve_error_key_granted(phi, alphabet)),
        induced_qber: rate(tally.qber_errors, tally.qber_bits)?,
        induced_qber_analytic: Some(through_channel(
            fixed_basis_induced_qber(phi, alphabet),
            &config.channel,
        )),
        success_probability: SuccessProbability {
            analytic: None,
            mc: None,
        },
        info_fraction: 1.0,
    })
}

/// Outcome of one seed-guessing trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GuessTrial {
    pub success: bool,
    pub eve_errors: u64,
    pub eve_bits: u64,
    pub qber_errors: u64,
    pub qber_bits: u64,
}

/// Eve draws a uniform guess of the seed key, expands it with the public
/// generator and measures every qubit in the guessed basis.
pub fn key_guess_trial<R: Rng>(config: &ProtocolConfig, rng: &mut R) -> Result<GuessTrial> {
    let alphabet = config.alphabet();
    let key = config.keystream.running_key(config.n, alphabet)?;
    let guess = SeedKey::random(config.keystream.seed_len(), rng)?;
    let (success, guessed) = match &config.keystream {
        KeystreamConfig::Lfsr { lfsr, seed } => {
            let guessed = match Lfsr::new(lfsr, &guess) {
                Ok(mut g) => expand_running_key(&mut g, config.n, alphabet)?,
                // The all-zero guess is a valid wrong guess; its register stays at zero.
                Err(_) => RunningKey::new(vec![0; config.n], alphabet)?,
            };
            (&guess == seed, guessed)
        }
        KeystreamConfig::Repetition { key } => {
            (&guess == key, repetition_running_key(&guess, config.n))
        }
    };
    let data = random_data(config.n, rng);
    let bases = |i: usize| Some(alphabet.basis(guessed.selectors()[i]));
    let s = attacked_frame(&data, &key, &config.channel, &bases, rng)?;
    Ok(GuessTrial {
        success,
        eve_errors: s.eve_errors,
        eve_bits: s.eve_bits,
        qber_errors: s.qber_errors,
        qber_bits: s.qber_bits,
    })
}

fn guess_tally(t: GuessTrial) -> Tally {
    Tally {
        trials: 1,
        successes: t.success as u64,
        eve_errors: t.eve_errors,
        eve_bits: t.eve_bits,
        qber_errors: t.qber_errors,
        qber_bits: t.qber_bits,
        successes_with_errors: (t.success && (t.eve_errors > 0 || t.qber_errors > 0)) as u64,
    }
}

/// Seed-key guessing: succeeds with probability `2^−|K_s|`, after which Eve
/// knows every bit and causes no errors.
pub fn attack_key_guess(config: &ProtocolConfig, trials: u64, seed: u64) -> Result<AttackReport> {
    config.validate()?;
    let tally = run_trials(trials, seed, |rng| key_guess_trial(config, rng).map(guess_tally))?;
    let bits = config.keystream.seed_len() as i32;
    Ok(AttackReport {
        strategy: AttackStrategy::KeyGuess.to_string(),
        trials,
        attacked_qubits: tally.eve_bits,
        eve_bit_error: rate(tally.eve_errors, tally.eve_bits)?,
        eve_bit_error_analytic: None,
        induced_qber: rate(tally.qber_errors, tally.qber_bits)?,
        induced_qber_analytic: None,
        success_probability: SuccessProbability {
            analytic: Some(0.5f64.powi(bits)),
            mc: Some(binomial_ci(tally.successes, tally.trials.max(1))?),
        },
        info_fraction: 1.0,
    })
}

/// Outcome of one block-guess trial on the repetition scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockTrial {
    pub success: bool,
    /// Qubits in the attacked blocks.
    pub attacked: u64,
    pub eve_errors: u64,
    /// User errors on attacked positions.
    pub induced_errors: u64,
}

/// Eve guesses the key bit of each of the first `k_blocks` blocks and
/// measures-resends those blocks in the guessed basis over a noiseless line.
pub fn block_guess_trial<R: Rng>(n: usize, m_k: usize, k_blocks: usize, rng: &mut R) -> Result<BlockTrial> {
    if k_blocks == 0 {
        return Err(Error::domain("block guess needs at least one block"));
    }
    if k_blocks > m_k {
        return Err(Error::domain(format!("cannot attack {k_blocks} of {m_k} blocks")));
    }
    let secret = SeedKey::random(m_k, rng)?;
    let key = repetition_running_key(&secret, n);
    let block = n.div_ceil(m_k).max(1);
    let attacked = (k_blocks * block).min(n);
    let guesses: Vec<bool> = (0..k_blocks).map(|_| rng.gen()).collect();
    let success = guesses.iter().zip(secret.bits()).all(|(g, s)| g == s);

    let alphabet = key.alphabet();
    let bases = |i: usize| (i < attacked).then(|| alphabet.basis(guesses[i / block] as u32));
    let data = random_data(n, rng);
    let mut eve = ResendInBases::new(n, &bases);
    let frame = transmit(&data, &key, &ChannelModel::NOISELESS, &mut eve, rng)?;
    let (eve_errors, _) = eve.decode_errors(&data, &key);
    let induced_errors = frame
        .detected
        .iter()
        .zip(frame.alice.iter().zip(&frame.bob))
        .filter(|(&i, (a, b))| i < attacked && a != b)
        .count() as u64;
    Ok(BlockTrial {
        success,
        attacked: attacked as u64,
        eve_errors,
        induced_errors,
    })
}

/// Block-guess attack on the repetition scheme with `m_k` key bits over `n`
/// qubits. One trial is one frame of `n` qubits.
pub fn attack_block_guess(
    n: usize,
    m_k: usize,
    k_blocks: usize,
    trials: u64,
    seed: u64,
) -> Result<AttackReport> {
    // Surface argument errors before spawning trials.
    block_guess_trial(n.min(m_k.max(1)), m_k, k_blocks, &mut seeded_rng(seed))?;
    let tally = run_trials(trials, seed, |rng| {
        let t = block_guess_trial(n, m_k, k_blocks, rng)?;
        Ok(Tally {
            trials: 1,
            successes: t.success as u64,
            eve_errors: t.eve_errors,
            eve_bits: t.attacked,
            qber_errors: t.induced_errors,
            qber_bits: t.attacked,
            successes_with_errors: (t.success && (t.eve_errors > 0 || t.induced_errors > 0)) as u64,
        })
    })?;
    Ok(AttackReport {
        strategy: AttackStrategy::BlockGuess { k_blocks }.to_string(),
        trials,
        attacked_qubits: tally.eve_bits,
        eve_bit_error: rate(tally.eve_errors, tally.eve_bits)?,
        // Each block is guessed wrong with probability ½; a wrong basis is
        // conjugate to the right one and costs ½ error to both Eve and Bob.
        eve_bit_error_analytic: Some(0.25),
        induced_qber: rate(tally.qber_errors, tally.qber_bits)?,
        induced_qber_analytic: Some(0.25),
        success_probability: SuccessProbability {
            analytic: Some(block_guess_success(k_blocks)),
            mc: Some(binomial_ci(tally.successes, tally.trials.max(1))?),
        },
        info_fraction: k_blocks as f64 / m_k as f64,
    })
}

/// Probability that all `k_blocks` block guesses are right: `2^−k`.
pub fn block_guess_success(k_blocks: usize) -> f64 {
    0.5f64.powi(k_blocks as i32)
}

/// Runs `strategy` against `config`. The block-guess attack reads `n` and
/// the number of key bits `m_k` from a repetition keystream.
pub fn run_attack(
    strategy: AttackStrategy,
    config: &ProtocolConfig,
    trials: u64,
    seed: u64,
) -> Result<AttackReport> {
    if trials == 0 {
        return Err(Error::domain("at least one trial is required"));
    }
    match strategy {
        AttackStrategy::InterceptResend { fraction } => {
            attack_intercept_resend(config, fraction, trials, seed)
        }
        AttackStrategy::FixedBasis(phi) => attack_fixed_basis(config, phi, trials, seed),
        AttackStrategy::KeyGuess => attack_key_guess(config, trials, seed),
        AttackStrategy::BlockGuess { k_blocks } => match &config.keystream {
            KeystreamConfig::Repetition { key } => {
                attack_block_guess(config.n, key.len(), k_blocks, trials, seed)
            }
            KeystreamConfig::Lfsr { .. } => Err(Error::domain(
                "block guess attack requires a repetition keystream",
            )),
        },
    }
}

/// Density matrix of one qubit keyed by `selector` when the data bit is 0
/// with probability `p0`.
pub fn ciphertext_state_with_prior(selector: u32, alphabet: BasisAlphabet, p0: f64) -> Result<DensityMatrix> {
    density_of_mixture(&[
        (p0, encode_state(false, selector, alphabet)?),
        (1.0 - p0, encode_state(true, selector, alphabet)?),
    ])
}

/// Per-position state Eve sees without knowing the data, for uniform data.
pub fn ciphertext_only_state(key: &RunningKey) -> Result<Vec<DensityMatrix>> {
    key.selectors()
        .iter()
        .map(|&s| ciphertext_state_with_prior(s, key.alphabet(), 0.5))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::Mode;
    use std::f64::consts::FRAC_PI_2;

    fn config(n: usize, m: u32) -> ProtocolConfig {
        ProtocolConfig {
            n,
            m: BasisAlphabet::new(m).unwrap(),
            keystream: KeystreamConfig::Lfsr {
                lfsr: "16:16,15,13,4".parse().unwrap(),
                seed: "1011001110001111".parse().unwrap(),
            },
            channel: ChannelModel::NOISELESS,
            code_rate: 0.6,
            pa_security_param: 0,
            verification_len: 16,
            mode: Mode::KeyGeneration,
        }
    }

    fn within_4_sigma(est: f64, p: f64, n: u64) -> bool {
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        (est - p).abs() <= 4.0 * sigma
    }

    #[test]
    fn parse_strategies() {
        assert_eq!("intercept".parse::<AttackStrategy>().unwrap(), AttackStrategy::InterceptResend { fraction: 1.0 });
        assert_eq!(
            "intercept:0.1".parse::<AttackStrategy>().unwrap(),
            AttackStrategy::InterceptResend { fraction: 0.1 }
        );
        match "fixed:0.25".parse::<AttackStrategy>().unwrap() {
            AttackStrategy::FixedBasis(b) => assert_eq!(b.phi(), 0.25),
            other => panic!("{other:?}"),
        }
        assert_eq!("breidbart".parse::<AttackStrategy>().unwrap(), AttackStrategy::breidbart());
        assert_eq!("keyguess".parse::<AttackStrategy>().unwrap(), AttackStrategy::KeyGuess);
        assert_eq!(
            "blockguess:15".parse::<AttackStrategy>().unwrap(),
            AttackStrategy::BlockGuess { k_blocks: 15 }
        );
        for bad in ["fixed:banana", "fixed", "blockguess:0", "blockguess", "nope", "intercept:2", "keyguess:1"] {
            assert!(bad.parse::<AttackStrategy>().is_err(), "{bad}");
        }
        for s in ["intercept", "intercept:0.25", "keyguess", "blockguess:3"] {
            assert_eq!(s.parse::<AttackStrategy>().unwrap().to_string(), s);
        }
    }

    #[test]
    fn intercept_resend_full() {
        let r = attack_intercept_resend(&config(10_000, 2), 1.0, 10, 1).unwrap();
        assert_eq!(r.attacked_qubits, 100_000);
        assert!(within_4_sigma(r.eve_bit_error.value, 0.25, 100_000));
        assert!(within_4_sigma(r.induced_qber.value, 0.25, 100_000));
    }

    #[test]
    fn intercept_resend_partial_and_none() {
        let r = attack_intercept_resend(&config(10_000, 2), 0.1, 10, 2).unwrap();
        assert!(within_4_sigma(r.induced_qber.value, 0.025, 100_000), "{}", r.induced_qber.value);
        let r = attack_intercept_resend(&config(1_000, 2), 0.0, 5, 3).unwrap();
        assert_eq!(r.induced_qber.value, 0.0);
        assert_eq!(r.attacked_qubits, 0);
        assert!(attack_intercept_resend(&config(100, 4), 1.0, 1, 0).is_err());
    }

    // Oracle: enumerate the 2m (bit, basis) cases and both of Eve's outcomes.
    fn induced_oracle(phi: f64, m: u32) -> f64 {
        let mut total = 0.0;
        for j in 0..m {
            let theta = j as f64 * FRAC_PI_2 / m as f64;
            for bit in [0.0, 1.0] {
                let sent = theta + bit * FRAC_PI_2;
                for outcome in [0.0, 1.0] {
                    let resent = phi + outcome * FRAC_PI_2;
                    let p_outcome = (sent - resent).cos().powi(2);
                    let wrong = theta + (1.0 - bit) * FRAC_PI_2;
                    let p_bob_wrong = (resent - wrong).cos().powi(2);
                    total += p_outcome * p_bob_wrong;
                }
            }
        }
        total / (2 * m) as f64
    }

    #[test]
    fn induced_qber_closed_form_matches_enumeration() {
        assert!((induced_oracle(FRAC_PI_8, 2) - 0.25).abs() < 1e-12);
        for m in [2, 4, 8] {
            for i in 0..20 {
                let phi = i as f64 * 0.077;
                let closed = fixed_basis_induced_qber(MeasBasis::new(phi), BasisAlphabet::new(m).unwrap());
                assert!((closed - induced_oracle(phi, m)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fixed_basis_examples() {
        let r = attack_fixed_basis(&config(100_000, 2), MeasBasis::new(FRAC_PI_8), 10, 4).unwrap();
        let n = r.attacked_qubits;
        assert_eq!(n, 1_000_000);
        assert!(within_4_sigma(r.eve_bit_error.value, 0.146_446_609_4, n), "{}", r.eve_bit_error.value);
        assert!(within_4_sigma(r.induced_qber.value, 0.25, n));

        let r = attack_fixed_basis(&config(100_000, 2), MeasBasis::new(0.0), 1, 5).unwrap();
        assert!(within_4_sigma(r.eve_bit_error.value, 0.25, 100_000));
    }

    #[test]
    fn fixed_basis_mc_agrees_with_key_granted_functional() {
        for (m, phi) in [(4, 0.1), (8, 0.5), (2, 1.0)] {
            let al = BasisAlphabet::new(m).unwrap();
            let basis = MeasBasis::new(phi);
            let r = attack_fixed_basis(&config(50_000, m), basis, 4, 6).unwrap();
            let p = eve_error_key_granted(basis, al);
            assert!(within_4_sigma(r.eve_bit_error.value, p, r.attacked_qubits), "m {m}");
            let q = fixed_basis_induced_qber(basis, al);
            assert!(within_4_sigma(r.induced_qber.value, q, r.attacked_qubits), "m {m}");
        }
    }

    fn guess_config() -> ProtocolConfig {
        let mut c = config(8, 2);
        c.keystream = KeystreamConfig::Lfsr {
            lfsr: "8:8,6,5,4".parse().unwrap(),
            seed: "10010110".parse().unwrap(),
        };
        c
    }

    #[test]
    fn key_guess_success_rate() {
        let c = guess_config();
        let r = attack_key_guess(&c, 1_000_000, 7).unwrap();
        let sp = r.success_probability;
        assert_eq!(sp.analytic, Some(1.0 / 256.0));
        assert!(within_4_sigma(sp.mc.unwrap().value, 1.0 / 256.0, 1_000_000));
    }

    #[test]
    fn key_guess_single_bit_seed() {
        let mut c = config(8, 2);
        c.keystream = KeystreamConfig::Repetition {
            key: "1".parse().unwrap(),
        };
        let r = attack_key_guess(&c, 100_000, 8).unwrap();
        assert_eq!(r.success_probability.analytic, Some(0.5));
        assert!(within_4_sigma(r.success_probability.mc.unwrap().value, 0.5, 100_000));
    }

    #[test]
    fn correct_key_guess_is_error_free() {
        let c = guess_config();
        let mut found = 0;
        for t in 0..20_000u64 {
            let trial = key_guess_trial(&c, &mut seeded_rng(t)).unwrap();
            if trial.success {
                found += 1;
                assert_eq!(trial.eve_errors, 0);
                assert_eq!(trial.qber_errors, 0);
            }
        }
        assert!(found > 0);
    }

    #[test]
    fn block_guess_examples() {
        assert!((block_guess_success(15) - 3.0518e-5).abs() < 1e-9);
        assert_eq!(block_guess_success(1), 0.5);

        let r = attack_block_guess(40, 8, 3, 100_000, 9).unwrap();
        let sp = r.success_probability;
        assert_eq!(sp.analytic, Some(0.125));
        assert!(within_4_sigma(sp.mc.unwrap().value, 0.125, 100_000));
        assert!((r.info_fraction - 3.0 / 8.0).abs() < 1e-15);
        assert!(within_4_sigma(r.induced_qber.value, 0.25, 15 * 100_000));
        assert!(within_4_sigma(r.eve_bit_error.value, 0.25, 15 * 100_000));

        let r = attack_block_guess(1000, 100, 15, 10, 10).unwrap();
        assert!((r.success_probability.analytic.unwrap() - 2f64.powi(-15)).abs() < 1e-15);
        assert!((r.info_fraction - 0.15).abs() < 1e-15);
        assert_eq!(r.attacked_qubits, 150 * 10);

        assert!(attack_block_guess(40, 8, 0, 1, 0).is_err());
        assert!(attack_block_guess(40, 8, 9, 1, 0).is_err());
    }

    #[test]
    fn block_guess_success_has_no_errors_and_failures_show_half_qber() {
        let mut failed_blocks_errors = 0u64;
        let mut failed_blocks_bits = 0u64;
        for t in 0..4_000u64 {
            let trial = block_guess_trial(40, 8, 1, &mut seeded_rng(t)).unwrap();
            if trial.success {
                assert_eq!(trial.eve_errors, 0);
                assert_eq!(trial.induced_errors, 0);
            } else {
                failed_blocks_errors += trial.induced_errors;
                failed_blocks_bits += trial.attacked;
            }
        }
        let q = failed_blocks_errors as f64 / failed_blocks_bits as f64;
        // A failed single-block guess is a conjugate-basis resend.
        assert!(within_4_sigma(q, 0.5, failed_blocks_bits), "{q}");
    }

    #[test]
    fn ciphertext_states_are_maximally_mixed() {
        let half = DensityMatrix::maximally_mixed();
        for m in [2, 16] {
            let al = BasisAlphabet::new(m).unwrap();
            let key = RunningKey::new((0..m).collect(), al).unwrap();
            for rho in ciphertext_only_state(&key).unwrap() {
                assert!(rho.max_abs_diff(&half) < 1e-12);
            }
        }
        let biased = ciphertext_state_with_prior(0, BasisAlphabet::bb84(), 0.7).unwrap();
        let expected = DensityMatrix::from_real([[0.7, 0.0], [0.0, 0.3]]).unwrap();
        assert!(biased.max_abs_diff(&expected) < 1e-12);
        assert!(biased.max_abs_diff(&half) > 0.1);
        let diag = ciphertext_state_with_prior(1, BasisAlphabet::bb84(), 0.7).unwrap();
        assert!(diag.max_abs_diff(&half) > 0.1);
    }

    #[test]
    fn reports_are_thread_count_independent() {
        let c = config(2_000, 2);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| attack_fixed_basis(&c, MeasBasis::new(0.3), 16, 42).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(4));
        assert_eq!(one.to_json(), run(8).to_json());
    }

    #[test]
    fn run_attack_dispatch() {
        let c = config(1_000, 2);
        assert!(run_attack(AttackStrategy::BlockGuess { k_blocks: 2 }, &c, 10, 0).is_err());
        assert!(run_attack(AttackStrategy::KeyGuess, &c, 0, 0).is_err());
        let mut rep = c.clone();
        rep.keystream = KeystreamConfig::Repetition {
            key: SeedKey::random(100, &mut seeded_rng(1)).unwrap(),
        };
        let r = run_attack(AttackStrategy::BlockGuess { k_blocks: 15 }, &rep, 10, 0).unwrap();
        assert!((r.success_probability.analytic.unwrap() - 3.0517578125e-5).abs() < 1e-12);
        assert!(run_attack(AttackStrategy::KeyGuess, &rep, 1, 0).is_ok());
    }
}
