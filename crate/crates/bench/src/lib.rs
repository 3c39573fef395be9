//! Fixtures shared by the criterion benchmarks.

use kcq_core::protocol::{ChannelModel, KeystreamConfig, Mode, ProtocolConfig};
use kcq_core::{BasisAlphabet, SeedKey, SimRng};
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

pub fn random_bits(len: usize, seed: u64) -> Vec<bool> {
    let mut r = rng(seed);
    (0..len).map(|_| r.gen()).collect()
}

/// A four-state configuration with a 64-bit LFSR seed.
pub fn config(n: usize, p_c: f64) -> ProtocolConfig {
    ProtocolConfig {
        n,
        m: BasisAlphabet::bb84(),
        keystream: KeystreamConfig::Lfsr {
            lfsr: "64:64,4,3,1".parse().expect("valid spec"),
            seed: SeedKey::random(64, &mut rng(1)).expect("nonempty"),
        },
        channel: ChannelModel { p_c, loss: 0.0 },
        code_rate: 0.6,
        pa_security_param: 64,
        verification_len: 32,
        mode: Mode::KeyGeneration,
    }
}
