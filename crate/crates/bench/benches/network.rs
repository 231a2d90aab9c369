use criterion::{criterion_group, criterion_main, Criterion};
use disparity_bench::fixture;
use disparity_core::network::{Model, NetworkConfig};
use disparity_core::Tape;

fn desk(c: &mut Criterion) {
    let model = Model::<f32>::new(NetworkConfig::desk()).unwrap();
    let left = fixture([1, 3, 64, 128], 1);
    let right = fixture([1, 3, 64, 128], 2);
    let mut g = c.benchmark_group("desk");
    g.sample_size(20);
    g.bench_function("forward", |b| b.iter(|| model.predict(&left, &right).unwrap()));
    g.bench_function("forward_backward", |b| {
        b.iter(|| {
            let mut tape = Tape::new();
            let p = model.params.bind(&mut tape, true);
            let l = tape.constant(left.clone());
            let r = tape.constant(right.clone());
            let out = model.forward(&mut tape, &p, l, r).unwrap();
            let loss = tape.sum(out.disparity[0]);
            tape.backward(loss).unwrap();
        })
    });
    g.finish();
}

criterion_group!(benches, desk);
criterion_main!(benches);
