use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use pbnc_core::codec::Precode;
use pbnc_core::de::{BcnTables, DeConfig, DeRunner};
use pbnc_core::io::design_example_1;
use pbnc_core::network::{binomial_pmf, line_network_dist, ml_lower_bound};
use pbnc_core::optimizer::lift_with_retry;
use pbnc_core::sim::{realize_transfer, run_trial, DecoderKind, TrialPlan};
use pbnc_core::{FieldSpec, Gf, GfMatrix, LineNetworkSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gf_kernels(c: &mut Criterion) {
    let gf = Gf::gf256();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let src: Vec<u8> = (0..1024).map(|_| gf.random_element(&mut rng)).collect();
    let mut dst = vec![0u8; 1024];
    c.bench_function("gf256_axpy_1k", |b| b.iter(|| gf.axpy(&mut dst, black_box(&src), 0x53)));
    let m = GfMatrix::random(&gf, 16, 16, &mut rng);
    c.bench_function("gf256_rank_16x16", |b| b.iter(|| black_box(&m).rank(&gf)));
    let spec = LineNetworkSpec::homogeneous(3, 0.2, 16, FieldSpec { m: 8 }).unwrap();
    c.bench_function("realize_transfer_e3_m16", |b| b.iter(|| realize_transfer(&gf, &spec, &mut rng)));
}

fn de_kernels(c: &mut Criterion) {
    let d = design_example_1();
    let spec = LineNetworkSpec::homogeneous(d.hops, 0.2, d.m_batch, d.field).unwrap();
    let h = line_network_dist(&spec);
    let tables = BcnTables::new(d.m_batch, d.field);
    let w = tables.beta_weights(&h);
    let omega = binomial_pmf(11, 0.3);
    c.bench_function("bcn_inner_direct_d12", |b| b.iter(|| tables.bcn_inner_direct(&h, black_box(&omega))));
    c.bench_function("bcn_inner_beta_d12", |b| b.iter(|| tables.bcn_inner_beta_binomial(&w, 11, black_box(0.3))));
    let runner = DeRunner::new(&d.b, &d.delta, d.m_batch, d.field, DeConfig::default()).unwrap();
    c.bench_function("de_run_example_1", |b| b.iter(|| runner.run(black_box(&h))));
    c.bench_function("ml_bound_a250_n60", |b| b.iter(|| ml_lower_bound(&h, 60, 250)));
}

fn decoder_kernels(c: &mut Criterion) {
    let d = design_example_1();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut code =
        lift_with_retry(&d.b, &d.delta, d.core_rows, d.z1, d.z2, d.m_batch, d.field, &mut rng, 100).unwrap();
    let precode = Precode::full_rank(&mut code, &mut rng, 10).unwrap();
    let gf = Gf::new(d.field).unwrap();
    let mut plan = TrialPlan {
        netspec: LineNetworkSpec::homogeneous(d.hops, 0.2, d.m_batch, d.field).unwrap(),
        code,
        precode,
        n_values: vec![60],
        trials: 1,
        decoder: DecoderKind::Bp,
        seed: 3,
        stop_after_failures: None,
        payload_len: 1,
    };
    let mut group = c.benchmark_group("trial_example_1_n60");
    group.sample_size(20);
    group.bench_function("bp", |b| b.iter(|| run_trial(&gf, &plan, 60, 0).unwrap()));
    plan.decoder = DecoderKind::Inactivation { cap: None };
    group.bench_function("inactivation", |b| b.iter(|| run_trial(&gf, &plan, 60, 0).unwrap()));
    group.finish();
}

criterion_group!(benches, gf_kernels, de_kernels, decoder_kernels);
criterion_main!(benches);
