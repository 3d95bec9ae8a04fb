use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use d2dstore_core::analytic::{overall_cost, p_d2d};
use d2dstore_core::incoming::{stationary, ChainConfig};
use d2dstore_core::search::{enumerate_codes, min_cost_curve, SearchSpec};
use d2dstore_core::simulator::{self, SimConfig};
use d2dstore_core::{derive_code, CodeFamily, CostQuery, NetworkParams, Scheme};

fn params() -> NetworkParams {
    NetworkParams::reference(0.02, 40.0)
}

fn analytic(c: &mut Criterion) {
    let p = params();
    let mds = derive_code(CodeFamily::Mds, 9, 3, 3, 1.0).unwrap();
    let lrc = derive_code(CodeFamily::Lrc, 6, 3, 2, 1.0).unwrap();
    c.bench_function("p_d2d [9,3,3]", |b| b.iter(|| p_d2d(&p, &mds, black_box(0.5)).unwrap()));
    for scheme in Scheme::ALL {
        c.bench_function(&format!("overall_cost [9,3,3] {scheme}"), |b| {
            b.iter(|| overall_cost(&CostQuery::new(p, mds, scheme, black_box(0.5))).unwrap())
        });
    }
    c.bench_function("overall_cost [6,3,2] LRC", |b| {
        b.iter(|| overall_cost(&CostQuery::new(p, lrc, Scheme::Conventional, black_box(0.5))).unwrap())
    });
}

fn incoming(c: &mut Criterion) {
    let p = params().with_class_arrival_rate(1.0);
    for delta in [0.01, 1.0] {
        let cfg = ChainConfig::for_params(&p, delta);
        c.bench_function(&format!("stationary Δ={delta}"), |b| b.iter(|| stationary(black_box(&cfg)).unwrap()));
    }
}

fn search(c: &mut Criterion) {
    let spec = SearchSpec::new(params(), Scheme::Conventional, 3.0);
    c.bench_function("enumerate_codes Γ=3", |b| b.iter(|| enumerate_codes(black_box(&spec)).unwrap()));
    let mut group = c.benchmark_group("search");
    group.sample_size(10);
    group.bench_function("min_cost_curve default grid", |b| b.iter(|| min_cost_curve(black_box(&spec)).unwrap()));
    group.finish();
}

fn simulate(c: &mut Criterion) {
    let code = derive_code(CodeFamily::Mds, 9, 3, 3, 1.0).unwrap();
    let mut group = c.benchmark_group("simulator");
    group.sample_size(10);
    group.bench_function("horizon 1e4", |b| {
        b.iter(|| simulator::run(&SimConfig::new(params(), code, Scheme::Hybrid, 0.5, 1e4, 1)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, analytic, incoming, search, simulate);
criterion_main!(benches);
