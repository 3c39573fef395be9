//! Real-plane qubit algebra.
//!
//! Every state used by the protocol lies on the real great circle of the
//! Bloch sphere, so a pure state is the single angle `θ` of the vector
//! `(cos θ, sin θ)` and an orthogonal measurement basis is the angle `φ` of
//! its outcome-0 vector. The `m`-basis alphabet places basis `j` at
//! `j·(π/2)/m`; bit 1 is the orthogonal partner at `+π/2`. With `m = 2` this
//! is the usual four-state alphabet `{0, π/4, π/2, 3π/4}`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const ANGLE_TOL: f64 = 1e-12;
const MATRIX_TOL: f64 = 1e-12;

fn reduce(angle: f64, period: f64) -> f64 {
    let r = angle.rem_euclid(period);
    if period - r < ANGLE_TOL {
        0.0
    } else {
        r
    }
}

/// A real pure qubit state `(cos θ, sin θ)` with `θ ∈ [0, π)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct StateAngle(f64);

impl StateAngle {
    /// Normalizes `theta` modulo π; a vector and its negation are one state.
    pub fn new(theta: f64) -> Self {
        StateAngle(reduce(theta, PI))
    }

    pub fn theta(self) -> f64 {
        self.0
    }

    /// The orthogonal state.
    pub fn orthogonal(self) -> Self {
        StateAngle::new(self.0 + FRAC_PI_2)
    }

    pub fn amplitudes(self) -> (f64, f64) {
        (self.0.cos(), self.0.sin())
    }
}

/// Orthogonal basis `{(cos φ, sin φ), (−sin φ, cos φ)}` with `φ ∈ [0, π/2)`.
///
/// Outcome 0 is the vector at `φ`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct MeasBasis(f64);

impl MeasBasis {
    pub fn new(phi: f64) -> Self {
        MeasBasis(reduce(phi, FRAC_PI_2))
    }

    pub fn phi(self) -> f64 {
        self.0
    }

    /// The state this basis projects onto for the given outcome.
    pub fn outcome_state(self, outcome: bool) -> StateAngle {
        StateAngle::new(self.0 + if outcome { FRAC_PI_2 } else { 0.0 })
    }
}

/// The `m`-basis encoding alphabet; `m` is a power of two, at least 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct BasisAlphabet {
    m: u32,
}

impl BasisAlphabet {
    pub fn new(m: u32) -> Result<Self> {
        if m < 2 || !m.is_power_of_two() {
            return Err(Error::domain(format!(
                "basis count must be a power of two >= 2, got {m}"
            )));
        }
        Ok(BasisAlphabet { m })
    }

    /// The four-state alphabet.
    pub fn bb84() -> Self {
        BasisAlphabet { m: 2 }
    }

    pub fn m(self) -> u32 {
        self.m
    }

    /// Running-key bits consumed per selector.
    pub fn bits_per_selector(self) -> u32 {
        self.m.trailing_zeros()
    }

    pub fn basis_angle(self, j: u32) -> f64 {
        f64::from(j) * FRAC_PI_2 / f64::from(self.m)
    }

    pub fn basis(self, j: u32) -> MeasBasis {
        MeasBasis::new(self.basis_angle(j))
    }

    pub fn angles(self) -> impl Iterator<Item = f64> {
        (0..self.m).map(move |j| self.basis_angle(j))
    }
}

impl TryFrom<u32> for BasisAlphabet {
    type Error = Error;

    fn try_from(m: u32) -> Result<Self> {
        BasisAlphabet::new(m)
    }
}

impl From<BasisAlphabet> for u32 {
    fn from(a: BasisAlphabet) -> u32 {
        a.m
    }
}

/// Encodes a data bit in basis `basis_index` of the alphabet.
pub fn encode_state(bit: bool, basis_index: u32, alphabet: BasisAlphabet) -> Result<StateAngle> {
    if basis_index >= alphabet.m() {
        return Err(Error::domain(format!(
            "basis index {basis_index} out of range for m = {}",
            alphabet.m()
        )));
    }
    let theta = alphabet.basis_angle(basis_index) + if bit { FRAC_PI_2 } else { 0.0 };
    Ok(StateAngle::new(theta))
}

/// Probability of outcome 0: `cos²(θ − φ)`.
pub fn outcome_probability(state: StateAngle, basis: MeasBasis) -> f64 {
    let c = (state.theta() - basis.phi()).cos();
    c * c
}

/// Samples a projective measurement; returns `true` for outcome 1.
pub fn measure<R: Rng + ?Sized>(state: StateAngle, basis: MeasBasis, rng: &mut R) -> bool {
    rng.gen::<f64>() >= outcome_probability(state, basis)
}

/// A 2×2 density matrix.
///
/// Entries are complex for generality; every state built in this crate is
/// real.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix {
    entries: [[Complex64; 2]; 2],
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity (all within 1e-12).
    pub fn new(entries: [[Complex64; 2]; 2]) -> Result<Self> {
        let rho = DensityMatrix { entries };
        rho.validate()?;
        Ok(rho)
    }

    pub fn from_real(entries: [[f64; 2]; 2]) -> Result<Self> {
        let c = |x: f64| Complex64::new(x, 0.0);
        Self::new([
            [c(entries[0][0]), c(entries[0][1])],
            [c(entries[1][0]), c(entries[1][1])],
        ])
    }

    pub fn pure(state: StateAngle) -> Self {
        let (c, s) = state.amplitudes();
        DensityMatrix {
            entries: [
                [Complex64::new(c * c, 0.0), Complex64::new(c * s, 0.0)],
                [Complex64::new(c * s, 0.0), Complex64::new(s * s, 0.0)],
            ],
        }
    }

    /// The maximally mixed state `I/2`.
    pub fn maximally_mixed() -> Self {
        let half = Complex64::new(0.5, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        DensityMatrix {
            entries: [[half, zero], [zero, half]],
        }
    }

    pub fn entries(&self) -> &[[Complex64; 2]; 2] {
        &self.entries
    }

    pub fn trace(&self) -> Complex64 {
        self.entries[0][0] + self.entries[1][1]
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> [f64; 2] {
        hermitian_eigenvalues(&self.entries)
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((self.entries[i][j] - other.entries[i][j]).norm());
            }
        }
        worst
    }

    fn validate(&self) -> Result<()> {
        let e = &self.entries;
        let herm = (e[0][0].im.abs())
            .max(e[1][1].im.abs())
            .max((e[0][1] - e[1][0].conj()).norm());
        if herm > MATRIX_TOL {
            return Err(Error::domain("density matrix is not Hermitian"));
        }
        if (self.trace() - Complex64::new(1.0, 0.0)).norm() > MATRIX_TOL {
            return Err(Error::domain("density matrix trace is not 1"));
        }
        if self.eigenvalues()[0] < -MATRIX_TOL {
            return Err(Error::domain("density matrix is not positive semidefinite"));
        }
        Ok(())
    }
}

impl fmt::Display for DensityMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let e = &self.entries;
        write!(
            f,
            "[[{}, {}], [{}, {}]]",
            e[0][0], e[0][1], e[1][0], e[1][1]
        )
    }
}

fn hermitian_eigenvalues(e: &[[Complex64; 2]; 2]) -> [f64; 2] {
    let a = e[0][0].re;
    let d = e[1][1].re;
    let mean = 0.5 * (a + d);
    let radius = (0.25 * (a - d) * (a - d) + e[0][1].norm_sqr()).sqrt();
    [mean - radius, mean + radius]
}

/// `Σ wᵢ |θᵢ⟩⟨θᵢ|`; weights must be non-negative and sum to 1.
pub fn density_of_mixture(components: &[(f64, StateAngle)]) -> Result<DensityMatrix> {
    if components.iter().any(|&(w, _)| w < 0.0 || !w.is_finite()) {
        return Err(Error::domain("mixture weights must be non-negative"));
    }
    let total: f64 = components.iter().map(|&(w, _)| w).sum();
    if (total - 1.0).abs() > MATRIX_TOL {
        return Err(Error::domain(format!(
            "mixture weights sum to {total}, expected 1"
        )));
    }
    let mut acc = [[0.0f64; 2]; 2];
    for &(w, state) in components {
        let (c, s) = state.amplitudes();
        acc[0][0] += w * c * c;
        acc[0][1] += w * c * s;
        acc[1][1] += w * s * s;
    }
    acc[1][0] = acc[0][1];
    DensityMatrix::from_real(acc)
}

/// Minimum error probability for discriminating `rho0` (prior `p0`) from
/// `rho1` (prior `1 − p0`): `½(1 − ‖p1·ρ1 − p0·ρ0‖₁)`.
pub fn helstrom_error(rho0: &DensityMatrix, rho1: &DensityMatrix, p0: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p0) {
        return Err(Error::domain(format!("prior {p0} outside [0, 1]")));
    }
    rho0.validate()?;
    rho1.validate()?;
    let p1 = 1.0 - p0;
    let gamma: [[Complex64; 2]; 2] =
        std::array::from_fn(|i| std::array::from_fn(|j| rho1.entries[i][j] * p1 - rho0.entries[i][j] * p0));
    let trace_norm: f64 = hermitian_eigenvalues(&gamma).iter().map(|v| v.abs()).sum();
    Ok((0.5 * (1.0 - trace_norm)).clamp(0.0, 0.5))
}

// min(sin²Δ, cos²Δ) = (1 − |cos 2Δ|) / 2
fn decoding_error(delta: f64) -> f64 {
    0.5 * (1.0 - (2.0 * delta).cos().abs())
}

// d/dφ of decoding_error(θ − φ)
fn decoding_error_slope(delta: f64) -> f64 {
    let c = (2.0 * delta).cos();
    -(2.0 * delta).sin() * c.signum()
}

/// Eve's average bit error when she measures every qubit in basis `phi` and
/// is told each basis index afterwards, decoding by maximum likelihood.
pub fn eve_error_key_granted(phi: MeasBasis, alphabet: BasisAlphabet) -> f64 {
    let m = f64::from(alphabet.m());
    alphabet
        .angles()
        .map(|theta| decoding_error(theta - phi.phi()))
        .sum::<f64>()
        / m
}

fn eve_error_slope(phi: f64, alphabet: BasisAlphabet) -> f64 {
    alphabet
        .angles()
        .map(|theta| decoding_error_slope(theta - phi))
        .sum::<f64>()
        / f64::from(alphabet.m())
}

/// Grid points per fundamental period of the fixed-basis objective.
pub const OPTIMIZER_GRID: usize = 4096;

/// Finds the fixed measurement basis minimizing [`eve_error_key_granted`].
///
/// The objective is periodic in `φ` with period `(π/2)/m`, so the scan covers
/// one period with [`OPTIMIZER_GRID`] points and refines the best cell. The
/// returned `φ` is the smallest minimizer in `[0, π/2)`.
pub fn optimal_fixed_basis(alphabet: BasisAlphabet) -> (MeasBasis, f64) {
    let period = FRAC_PI_2 / f64::from(alphabet.m());
    let step = period / OPTIMIZER_GRID as f64;
    let f = |phi: f64| eve_error_key_granted(MeasBasis::new(phi), alphabet);

    let mut best_i = 0usize;
    let mut best_v = f64::INFINITY;
    for i in 0..OPTIMIZER_GRID {
        let v = f(i as f64 * step);
        if v < best_v - 1e-15 {
            best_v = v;
            best_i = i;
        }
    }

    let center = best_i as f64 * step;
    let (lo, hi) = (center - step, center + step);
    let phi = refine(lo, hi, &f, |x| eve_error_slope(x, alphabet));
    let value = f(phi);
    if value <= best_v {
        (MeasBasis::new(phi), value)
    } else {
        (MeasBasis::new(center), best_v)
    }
}

// Bisection on the slope when it brackets a sign change from − to +,
// otherwise golden-section search on the value.
fn refine(
    mut lo: f64,
    mut hi: f64,
    f: &impl Fn(f64) -> f64,
    slope: impl Fn(f64) -> f64,
) -> f64 {
    if slope(lo) < 0.0 && slope(hi) > 0.0 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if slope(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        return 0.5 * (lo + hi);
    }

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > 1e-13 {
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        }
    }
    0.5 * (lo + hi)
}

/// The equal-weight mixture of one data bit over every basis of the alphabet.
pub fn bit_mixture(bit: bool, alphabet: BasisAlphabet) -> DensityMatrix {
    let w = 1.0 / f64::from(alphabet.m());
    let components: Vec<(f64, StateAngle)> = (0..alphabet.m())
        .map(|j| (w, encode_state(bit, j, alphabet).expect("index in range")))
        .collect();
    density_of_mixture(&components).expect("uniform weights")
}

/// Eve's minimum bit error when the running key is never revealed: Helstrom
/// discrimination of the bit-0 and bit-1 mixtures over all bases.
pub fn keyless_error(alphabet: BasisAlphabet) -> f64 {
    let rho0 = bit_mixture(false, alphabet);
    let rho1 = bit_mixture(true, alphabet);
    helstrom_error(&rho0, &rho1, 0.5).expect("valid mixtures")
}
