//! Information-theoretic helpers and experiment aggregation.

use std::io::Write;

use serde::Serialize;

use crate::protocol::ProtocolOutcome;
use crate::qubit::{keyless_error, optimal_fixed_basis, BasisAlphabet};
use crate::serde_fmt::{fmt_sig9, ser_sig9};
use crate::{Error, Result};

/// Eve's error-rate threshold below which the users hold an advantage.
pub const EVE_THRESHOLD: f64 = 0.15;

/// Largest basis count for which keyless rows are computed.
pub const MAX_KEYLESS_M: u32 = 1 << 16;

/// Binary entropy in bits, with `h2(0) = h2(1) = 0`.
pub fn h2(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("probability {p} outside [0, 1]")));
    }
    Ok(h2_unchecked(p))
}

pub(crate) fn h2_unchecked(p: f64) -> f64 {
    let term = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.log2() };
    term(p) + term(1.0 - p)
}

/// Capacity of the binary symmetric channel Eve faces with her best
/// fixed-basis measurement.
pub fn eve_capacity(alphabet: BasisAlphabet) -> f64 {
    let (_, err) = optimal_fixed_basis(alphabet);
    1.0 - h2_unchecked(err)
}

/// Code rates that the users can decode and Eve cannot:
/// `1 − h2(0.15) < R < 1 − h2(p_c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateWindow {
    #[serde(serialize_with = "ser_sig9")]
    pub lower: f64,
    #[serde(serialize_with = "ser_sig9")]
    pub upper: f64,
    pub nonempty: bool,
}

impl RateWindow {
    pub fn contains(&self, rate: f64) -> bool {
        rate > self.lower && rate < self.upper
    }
}

pub fn rate_window(p_c: f64) -> Result<RateWindow> {
    if !(0.0..0.5).contains(&p_c) {
        return Err(Error::domain(format!("channel error rate {p_c} outside [0, 0.5)")));
    }
    let lower = 1.0 - h2_unchecked(EVE_THRESHOLD);
    let upper = 1.0 - h2_unchecked(p_c);
    // Equal endpoints at p_c = 0.15 up to rounding in h2.
    let nonempty = upper - lower > 1e-12;
    Ok(RateWindow { lower, upper, nonempty })
}

/// One row of a basis-count sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub m: u32,
    #[serde(serialize_with = "ser_sig9")]
    pub e_key_granted: f64,
    #[serde(serialize_with = "ser_sig9")]
    pub e_keyless: f64,
    #[serde(serialize_with = "ser_sig9")]
    pub phi_star: f64,
}

/// Computes both eavesdropper error metrics for each basis count.
///
/// When `include_keyless` is false the keyless column is `NaN`.
pub fn sweep_m(m_values: &[u32], include_keyless: bool) -> Result<Vec<SweepRow>> {
    m_values
        .iter()
        .map(|&m| {
            let alphabet = BasisAlphabet::new(m)?;
            if include_keyless && m > MAX_KEYLESS_M {
                return Err(Error::Unsupported(format!(
                    "keyless error limited to m <= {MAX_KEYLESS_M}"
                )));
            }
            let (basis, e_key_granted) = optimal_fixed_basis(alphabet);
            let e_keyless = if include_keyless {
                keyless_error(alphabet)
            } else {
                f64::NAN
            };
            Ok(SweepRow {
                m,
                e_key_granted,
                e_keyless,
                phi_star: basis.phi(),
            })
        })
        .collect()
}

pub const SWEEP_CSV_HEADER: &str = "m,e_key_granted,e_keyless,phi_star";

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{}",
            r.m,
            fmt_sig9(r.e_key_granted),
            fmt_sig9(r.e_keyless),
            fmt_sig9(r.phi_star)
        )?;
    }
    Ok(())
}

/// A proportion with a 4σ normal-approximation half width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    #[serde(serialize_with = "ser_sig9")]
    pub value: f64,
    #[serde(serialize_with = "ser_sig9")]
    pub half_width: f64,
}

impl Estimate {
    pub fn low(&self) -> f64 {
        (self.value - self.half_width).max(0.0)
    }

    pub fn high(&self) -> f64 {
        (self.value + self.half_width).min(1.0)
    }

    /// Whether `x` lies within the interval.
    pub fn covers(&self, x: f64) -> bool {
        (self.value - x).abs() <= self.half_width
    }
}

/// Normal-approximation interval at 4σ; [`Estimate::low`] and
/// [`Estimate::high`] clamp the interval to `[0, 1]`.
pub fn binomial_ci(successes: u64, trials: u64) -> Result<Estimate> {
    if trials == 0 {
        return Err(Error::domain("binomial interval needs at least one trial"));
    }
    if successes > trials {
        return Err(Error::domain("more successes than trials"));
    }
    let p = successes as f64 / trials as f64;
    let sigma = (p * (1.0 - p) / trials as f64).sqrt();
    Ok(Estimate {
        value: p,
        half_width: 4.0 * sigma,
    })
}

/// Net secret-key bits per transmitted qubit.
pub fn net_key_rate(outcome: &ProtocolOutcome, n: usize) -> f64 {
    outcome.ledger.net as f64 / n as f64
}
