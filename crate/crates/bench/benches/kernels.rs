use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use kcq_bench::{config, random_bits, rng};
use kcq_core::keystream::lfsr_stream;
use kcq_core::protocol::{privacy_amplify, run_protocol, transmit_round};
use kcq_core::qubit::{keyless_error, optimal_fixed_basis};
use kcq_core::{BasisAlphabet, LfsrSpec, SeedKey};

fn bench_lfsr(c: &mut Criterion) {
    let spec: LfsrSpec = "64:64,4,3,1".parse().unwrap();
    let seed = SeedKey::new(random_bits(64, 3)).unwrap();
    c.bench_function("lfsr_stream_100k", |b| {
        b.iter(|| lfsr_stream(&spec, &seed, black_box(100_000)).unwrap())
    });
}

fn bench_privacy_amplification(c: &mut Criterion) {
    let mut group = c.benchmark_group("privacy_amplify");
    for len in [10_000usize, 95_000] {
        let input = random_bits(len, 4);
        let out = len / 5;
        let seed = random_bits(len + out - 1, 5);
        group.bench_with_input(BenchmarkId::from_parameter(len), &len, |b, _| {
            b.iter(|| privacy_amplify(black_box(&input), out, &seed).unwrap())
        });
    }
    group.finish();
}

fn bench_optimizer(c: &mut Criterion) {
    let mut group = c.benchmark_group("eve_optimum");
    for m in [2u32, 64, 4096] {
        let alphabet = BasisAlphabet::new(m).unwrap();
        group.bench_with_input(BenchmarkId::new("fixed_basis", m), &alphabet, |b, &a| {
            b.iter(|| optimal_fixed_basis(black_box(a)))
        });
        group.bench_with_input(BenchmarkId::new("keyless", m), &alphabet, |b, &a| {
            b.iter(|| keyless_error(black_box(a)))
        });
    }
    group.finish();
}

fn bench_protocol(c: &mut Criterion) {
    let cfg = config(100_000, 0.02);
    c.bench_function("transmit_round_100k", |b| {
        b.iter(|| transmit_round(&cfg, &mut rng(7)).unwrap())
    });
    let mut group = c.benchmark_group("run_protocol");
    group.sample_size(10);
    group.bench_function("n_100k", |b| b.iter(|| run_protocol(&cfg, &mut rng(8)).unwrap()));
    group.finish();
}

criterion_group!(
    benches,
    bench_lfsr,
    bench_privacy_amplification,
    bench_optimizer,
    bench_protocol
);
criterion_main!(benches);
