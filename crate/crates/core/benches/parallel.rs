//! Criterion benches for the data-parallel kernels.
//!
//! Built with the default `parallel` feature, every group also measures the
//! same operation inside a single-thread rayon pool for an in-run
//! comparison. Building with `--no-default-features` benches the true
//! sequential fallback (compare with `cargo bench -- --save-baseline`).

use std::time::Duration;

use criterion::{black_box, criterion_group, criterion_main, Criterion};
use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use asd_core::config::ModelConfig;
use asd_core::data::{generate_synthetic, SyntheticConfig};
use asd_core::encoders::VisualBackbone;
use asd_core::eval::{average_precision, FrameKey, ScoredFrame};
use asd_core::mfcc::compute_mfcc;
use asd_core::nn::ParamStore;

fn with_single_thread<T>(f: impl FnOnce() -> T + Send) -> T
where
    T: Send,
{
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .expect("single-thread pool")
            .install(f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        f()
    }
}

fn bench_backbone(c: &mut Criterion) {
    let mut ps = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let config = ModelConfig::default();
    let backbone = VisualBackbone::new(&mut ps, &mut rng, "bench", &config).unwrap();
    let crops = Array4::from_shape_fn((8, 3, 32, 32), |_| rng.gen_range(0.0..1.0));
    let mut group = c.benchmark_group("visual_backbone_forward_t8_32px");
    group.measurement_time(Duration::from_secs(8)).sample_size(10);
    group.bench_function("threads_ambient", |b| {
        b.iter(|| black_box(backbone.forward_infer(&ps, black_box(&crops))))
    });
    group.bench_function("threads_1", |b| {
        b.iter(|| with_single_thread(|| black_box(backbone.forward_infer(&ps, black_box(&crops)))))
    });
    group.finish();
}

fn bench_synth(c: &mut Criterion) {
    let config = SyntheticConfig {
        num_clips: 8,
        frames_per_clip: 10,
        ..SyntheticConfig::default()
    };
    let mut group = c.benchmark_group("synthetic_generation_8_clips");
    group.measurement_time(Duration::from_secs(8)).sample_size(10);
    group.bench_function("threads_ambient", |b| {
        b.iter(|| black_box(generate_synthetic(black_box(&config))))
    });
    group.bench_function("threads_1", |b| {
        b.iter(|| with_single_thread(|| black_box(generate_synthetic(black_box(&config)))))
    });
    group.finish();
}

fn bench_mfcc(c: &mut Criterion) {
    let wave: Vec<f64> = (0..16_000)
        .map(|i| (std::f64::consts::TAU * 440.0 * i as f64 / 16_000.0).sin())
        .collect();
    c.bench_function("mfcc_one_second", |b| {
        b.iter(|| black_box(compute_mfcc(black_box(&wave), 16_000).unwrap()))
    });
}

fn bench_average_precision(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let frames: Vec<ScoredFrame> = (0..20_000)
        .map(|i| ScoredFrame {
            key: FrameKey::new("v", "e", i as f64 * 0.04),
            score: rng.gen_range(0.0..1.0),
            label: rng.gen_bool(0.4),
        })
        .collect();
    c.bench_function("average_precision_20k_frames", |b| {
        b.iter(|| black_box(average_precision(black_box(&frames)).unwrap()))
    });
}

criterion_group!(
    benches,
    bench_backbone,
    bench_synth,
    bench_mfcc,
    bench_average_precision
);
criterion_main!(benches);
