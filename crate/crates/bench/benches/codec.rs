use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gmxc_bench::test_image;
use gmxc_core::codec::{decode_image, encode_image, CodingMode};
use gmxc_core::nn::{analysis_forward, synthesis_forward, NetworkWeights};

fn transforms(c: &mut Criterion) {
    let mut g = c.benchmark_group("transforms");
    g.sample_size(10);
    for n in [32, 64] {
        let w = NetworkWeights::init_random(1, n, 3).unwrap();
        let x = test_image(1, 128, 128);
        let y = analysis_forward(&x, &w).unwrap();
        g.bench_with_input(BenchmarkId::new("analysis_128", n), &x, |b, x| b.iter(|| analysis_forward(x, &w).unwrap()));
        g.bench_with_input(BenchmarkId::new("synthesis_128", n), &y, |b, y| {
            b.iter(|| synthesis_forward(y, &w).unwrap())
        });
    }
    g.finish();
}

fn pipeline(c: &mut Criterion) {
    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    let w = NetworkWeights::init_random(2, 32, 3).unwrap();
    let x = test_image(2, 128, 128);
    for mode in [CodingMode::Hyperprior, CodingMode::Joint] {
        let container = encode_image(&x, &w, mode).unwrap();
        g.bench_function(BenchmarkId::new("encode_128_n32", mode.name()), |b| {
            b.iter(|| encode_image(&x, &w, mode).unwrap())
        });
        g.bench_function(BenchmarkId::new("decode_128_n32", mode.name()), |b| {
            b.iter(|| decode_image(&container, &w).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, transforms, pipeline);
criterion_main!(benches);
