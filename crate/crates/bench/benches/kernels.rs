use criterion::{criterion_group, criterion_main, Criterion};
use sflab_core::attacks::{pgd_pixel, AttackConfig};
use sflab_core::models::{build_model, ModelSpec, Variant};
use sflab_core::spectral::{block_dct_forward, sf_kernel_bank, LEVEL_SHIFT};
use sflab_core::tensor::conv2d;
use sflab_core::{Rng, Tensor};

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = Rng::new(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.uniform(0.0, 1.0)).collect()).unwrap()
}

fn bench_conv(c: &mut Criterion) {
    let x = random(&[16, 192, 4, 4], 1);
    let k = random(&[128, 192, 3, 3], 2);
    c.bench_function("conv2d 16x192x4x4 -> 128, 3x3", |b| {
        b.iter(|| conv2d(&x, &k, 1, 1).unwrap())
    });
}

fn bench_dct(c: &mut Criterion) {
    let images = random(&[32, 3, 32, 32], 3);
    let bank = sf_kernel_bank();
    let mut group = c.benchmark_group("block dct 32x3x32x32");
    group.bench_function("separable", |b| {
        b.iter(|| block_dct_forward(&images, LEVEL_SHIFT).unwrap())
    });
    group.bench_function("as stride-8 conv", |b| {
        b.iter(|| conv2d(&images, bank.tensor(), 8, 0).unwrap())
    });
    group.finish();
}

fn bench_pgd(c: &mut Criterion) {
    let model = build_model(&ModelSpec::new(Variant::Sf, 10, 32, 32, 0)).unwrap();
    let images = random(&[16, 3, 32, 32], 4);
    let labels: Vec<usize> = (0..16).map(|i| i % 10).collect();
    let config = AttackConfig::pixel(0.01).with_steps(1);
    c.bench_function("pixel pgd step, sf model, 16 images 32x32", |b| {
        b.iter(|| pgd_pixel(&model, &images, &labels, &config).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = bench_conv, bench_dct, bench_pgd
}
criterion_main!(benches);
