//! Simulation and analysis toolkit for keyed-basis qubit key generation.
//!
//! A shared seed key is expanded by a keystream generator into a running key,
//! and each running-key selector picks the encoding basis of one qubit. The
//! legitimate receiver knows the basis and decodes every detected qubit
//! directly; an eavesdropper holding a full copy of the signal has to measure
//! without the key and is left with an irreducible error rate.
//!
//! Modules:
//!
//! * [`qubit`]: real-plane qubit states, measurement, density matrices,
//!   Helstrom discrimination and eavesdropper error functionals.
//! * [`keystream`]: LFSR and repetition running-key expansion.
//! * [`protocol`]: transmission, rate gate, reconciliation, privacy
//!   amplification, key verification, key accounting, direct encryption.
//! * [`adversary`]: eavesdropping strategies with analytic and Monte Carlo
//!   statistics.
//! * [`analysis`]: binary entropy, capacities, confidence intervals and
//!   basis-count sweeps.

pub mod adversary;
pub mod analysis;
mod error;
pub mod keystream;
pub mod protocol;
pub mod qubit;
pub mod serde_fmt;

pub use error::{Error, Result};

pub use adversary::{AttackReport, AttackStrategy};
pub use analysis::{h2, RateWindow, SweepRow};
pub use keystream::{BitSource, Lfsr, LfsrSpec, RunningKey, SeedKey};
pub use protocol::{ChannelModel, KeyLedger, Mode, ProtocolConfig, ProtocolOutcome};
pub use qubit::{BasisAlphabet, DensityMatrix, MeasBasis, StateAngle};

/// Seeded random source used throughout the crate.
pub type SimRng = rand_chacha::ChaCha8Rng;

/// Builds the crate's seeded random source from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> SimRng {
    use rand::SeedableRng;
    SimRng::seed_from_u64(seed)
}
