use bundleseq_bench::Fixture;
use bundleseq_core::baselines::fit_markov;
use bundleseq_core::evalkit::{evaluate_playlist, DemandMode};
use bundleseq_core::synthgen::{bayes_rate, generate, GeneratorSpec};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn pipeline(c: &mut Criterion) {
    let f = Fixture::table6(20, 2000);
    let train = f.train();
    let test = f.test();
    let mc = fit_markov(&train, &f.playlist, false, 0.0, 2).unwrap();
    c.bench_function("generate 2000 sessions", |b| {
        let spec = GeneratorSpec::table6(20, 2000, 3);
        b.iter(|| generate(black_box(&spec)).unwrap())
    });
    c.bench_function("fit MC", |b| b.iter(|| fit_markov(black_box(&train), &f.playlist, false, 0.0, 2).unwrap()));
    c.bench_function("bayes rate n=20", |b| b.iter(|| bayes_rate(black_box(&f.spec))));
    for mode in [DemandMode::Realized, DemandMode::Propagated] {
        c.bench_function(&format!("evaluate MC, {mode} demand"), |b| {
            b.iter(|| evaluate_playlist(&mc, black_box(&test), &f.playlist, 2, mode).unwrap())
        });
    }
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
