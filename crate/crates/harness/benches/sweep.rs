//! Benchmark-sweep throughput: the scene-parallel path against a
//! single-thread pool running the identical work.

use criterion::{criterion_group, criterion_main, Criterion};

use cadalign_harness::{run_benchmark, BenchConfig, WeightPolicy};

fn small_config() -> BenchConfig {
    BenchConfig {
        seed: 5,
        scenes: 16,
        objects_per_scene: 4,
        points_per_object: 96,
        sigmas: vec![0.0, 0.2],
        outlier_fraction: 0.1,
        policies: vec![WeightPolicy::Uniform, WeightPolicy::Irls],
        db_size: 18,
        db_points: 256,
        ..BenchConfig::default()
    }
}

fn bench_sweep(c: &mut Criterion) {
    let config = small_config();
    let mut group = c.benchmark_group("sweep_16_scenes");
    group.sample_size(10);

    group.bench_function("parallel", |b| {
        b.iter(|| run_benchmark(&config).unwrap());
    });

    #[cfg(feature = "parallel")]
    {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        group.bench_function("single_thread", |b| {
            b.iter(|| pool.install(|| run_benchmark(&config).unwrap()));
        });
    }
    group.finish();
}

criterion_group!(benches, bench_sweep);
criterion_main!(benches);
