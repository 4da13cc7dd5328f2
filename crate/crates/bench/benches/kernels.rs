use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use percept_core::image::resize_bicubic;
use percept_core::metrics::{ms_ssim_grad, ssim_grad, MetricParams};
use percept_core::mmd::{gaussian_samples, median_bandwidth, mmd2_unbiased};
use percept_core::nn::{Init, LayerSpec, Network, Shape};
use percept_core::util::test_support::random_pair;
use percept_core::{Image, PixelRange};

fn ssim(c: &mut Criterion) {
    let p = MetricParams::ssim_default();
    let mut g = c.benchmark_group("ssim_grad");
    for n in [32usize, 64, 128] {
        let (x, y) = random_pair(n, n, 0.3, 1);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| ssim_grad(black_box(&x), black_box(&y), &p).unwrap())
        });
    }
    g.finish();
}

fn ms_ssim(c: &mut Criterion) {
    let p = MetricParams::ms_ssim_default();
    let (x, y) = random_pair(176, 176, 0.3, 2);
    c.bench_function("ms_ssim_grad/176", |b| {
        b.iter(|| ms_ssim_grad(black_box(&x), black_box(&y), &p).unwrap())
    });
}

fn mmd(c: &mut Criterion) {
    let a = gaussian_samples(500, 8, 0.0, 1).unwrap();
    let b = gaussian_samples(500, 8, 0.5, 2).unwrap();
    let bw = median_bandwidth(&[&a, &b], 0).unwrap();
    c.bench_function("mmd2_unbiased/500x8", |bn| {
        bn.iter(|| mmd2_unbiased(black_box(&a), black_box(&b), bw).unwrap())
    });
}

fn conv(c: &mut Criterion) {
    let net = Network::new(
        &[
            LayerSpec::conv(16, 5, 2),
            LayerSpec::relu(),
            LayerSpec::conv(16, 5, 1),
            LayerSpec::relu(),
            LayerSpec::Upsample2,
            LayerSpec::conv(1, 5, 1),
        ],
        Shape::new(1, 32, 32),
        Init::FanInUniform,
        0,
    )
    .unwrap();
    let x = random_pair(32, 32, 0.0, 3).0;
    c.bench_function("conv_forward/32x32", |b| b.iter(|| net.predict(black_box(x.data())).unwrap()));
}

fn bicubic(c: &mut Criterion) {
    let img = Image::from_field(random_pair(128, 128, 0.0, 4).0, PixelRange::Unit).unwrap();
    c.bench_function("bicubic_downscale/128_to_32", |b| {
        b.iter(|| resize_bicubic(black_box(&img), 32, 32))
    });
}

criterion_group!(benches, ssim, ms_ssim, mmd, conv, bicubic);
criterion_main!(benches);
