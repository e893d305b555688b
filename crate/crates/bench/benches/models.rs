use bundleseq_bench::{small_transformer, Fixture};
use bundleseq_core::seqmodels::{labels_of, ModelKind, SequenceModel};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn forward_backward(c: &mut Criterion) {
    let f = Fixture::table6(20, 200);
    let encoder = f.encoder();
    let session = f.train()[0];
    let x = encoder.encode(session, &f.playlist, session.len());
    let labels = labels_of(session);
    let mut group = c.benchmark_group("session pass");
    for kind in [ModelKind::Mlp, ModelKind::Lstm, ModelKind::Transformer] {
        let model = SequenceModel::new(small_transformer(kind, encoder.dim())).unwrap();
        group.bench_with_input(BenchmarkId::new("forward", kind), &x, |b, x| {
            b.iter(|| model.probabilities(black_box(x)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("forward+backward", kind), &x, |b, x| {
            let mut grads = model.params.zeros_like();
            b.iter(|| model.loss_and_grad(&model.params, black_box(x), &labels, 1.0, &mut grads).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, forward_backward);
criterion_main!(benches);
