//! Throughput comparison of the rayon-parallel trial loop against the
//! sequential schedule, plus the inner hot spots (juggle mixing, trivariate
//! interpolation, witness preparation).
//!
//! `cargo bench -p pdqma-core` runs the parallel arm only when the default
//! `parallel` feature is enabled; `run_trials_seq` is always available for
//! the baseline.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use pdqma_core::field::{fit_total_degree, FieldSpec};
use pdqma_core::hv::{generalized_juggle, JuggleParams};
use pdqma_core::pcp;
use pdqma_core::protocol::{
    extension_state, make_prover, run_trials_seq, ProtocolMode, ProtocolParams, ProverKind,
};
use pdqma_core::qsim::{BasisLabel, Layout, RegValue, State};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bench_pdqma_trials(c: &mut Criterion) {
    let instance = pcp::tri16();
    let params = ProtocolParams::defaults(FieldSpec::new(7, 4, 3).unwrap(), ProtocolMode::Pdqma);
    let kind = ProverKind::Honest { assignment: None };
    let mut group = c.benchmark_group("pdqma_trials_x16");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| black_box(run_trials_seq(&instance, &kind, &params, 16, 7).unwrap()))
    });
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(pdqma_core::protocol::run_trials(&instance, &kind, &params, 16, 7).unwrap()))
    });
    group.finish();
}

fn bench_dqma_trials(c: &mut Criterion) {
    let instance = pcp::path8();
    let params = ProtocolParams::defaults(FieldSpec::new(5, 3, 3).unwrap(), ProtocolMode::Dqma);
    let kind = ProverKind::Honest { assignment: None };
    let mut group = c.benchmark_group("dqma_trials_x8");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| black_box(run_trials_seq(&instance, &kind, &params, 8, 7).unwrap()))
    });
    #[cfg(feature = "parallel")]
    group.bench_function("parallel", |b| {
        b.iter(|| black_box(pdqma_core::protocol::run_trials(&instance, &kind, &params, 8, 7).unwrap()))
    });
    group.finish();
}

fn bench_juggle(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut items = std::collections::BTreeSet::new();
    while items.len() < 20 {
        items.insert(rng.random_range(0..1024u64));
    }
    let state = State::prepare_uniform(
        Layout::new(["item"]),
        items.iter().map(|&v| BasisLabel::new(vec![RegValue::Scalar(v)])),
    )
    .unwrap();
    let params = JuggleParams::defaults(10, 20);
    c.bench_function("juggle_20_support", |b| {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        b.iter(|| black_box(generalized_juggle(&state, &params, &mut rng).unwrap()))
    });
}

fn bench_interpolation(c: &mut Criterion) {
    // The 294-sample, 35-coefficient trivariate fit from a full cube read.
    let q = 7u64;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut samples = Vec::new();
    for t1 in 1..q {
        for t2 in 0..q {
            for t3 in 0..q {
                samples.push((vec![t1, t2, t3], rng.random_range(0..q)));
            }
        }
    }
    c.bench_function("fit_total_degree_294x35", |b| {
        b.iter(|| black_box(fit_total_degree(&samples, 3, 4, q).unwrap()))
    });
}

fn bench_witness_preparation(c: &mut Criterion) {
    let instance = pcp::tri16();
    let spec = FieldSpec::new(7, 4, 3).unwrap();
    let prover = make_prover(&ProverKind::Honest { assignment: None }, &instance, &spec).unwrap();
    let oracle = prover.honest_oracle().unwrap().clone();
    c.bench_function("extension_state_q7_n4", |b| {
        b.iter(|| black_box(extension_state(&oracle).unwrap()))
    });
}

criterion_group!(
    benches,
    bench_pdqma_trials,
    bench_dqma_trials,
    bench_juggle,
    bench_interpolation,
    bench_witness_preparation
);
criterion_main!(benches);
