use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tempdens_core::backbone::{FeatureFrame, LinearHead};
use tempdens_core::calibration::{CalibrationConfig, CalibrationPack};
use tempdens_core::engine::{Engine, EngineConfig};
use tempdens_core::evaluation::auroc;
use tempdens_core::scoring::{score_knn, DensityModel, FeatureMemory, Moments, ScoreStats, TempDensConfig};
use tempdens_core::stream::TrueState;

fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| StandardNormal.sample(rng)).collect())
        .collect()
}

fn pack(rng: &mut ChaCha8Rng, d: usize, rows: usize) -> CalibrationPack {
    let unit = Moments { mean: 0.0, std: 1.0 };
    let means = gaussian_rows(rng, 2, d);
    CalibrationPack {
        density: DensityModel {
            class_means: means,
            inv_cov: DMatrix::identity(d, d),
            memory: FeatureMemory::from_rows(&gaussian_rows(rng, rows, d)).unwrap(),
        },
        stats: ScoreStats {
            ebo: unit,
            dens: unit,
            temp: unit,
        },
        tau: 1.0,
        lambda: 0.5,
        scoring: TempDensConfig::default(),
        calibration: CalibrationConfig::default(),
        aux: None,
        fit_frames: rows,
        validation_frames: 0,
    }
}

fn engine_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("engine_step");
    for (d, rows) in [(22, 10_000), (22, 50_000), (64, 50_000)] {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pack = pack(&mut rng, d, rows);
        let head = LinearHead::random(4, d, &mut rng);
        let features = gaussian_rows(&mut rng, 64, d);
        group.bench_with_input(BenchmarkId::new(format!("d{d}"), rows), &rows, |b, _| {
            let mut engine = Engine::new(&pack, EngineConfig::from_pack(&pack)).unwrap();
            let mut t = 0.0;
            let mut i = 0;
            b.iter(|| {
                let f = &features[i % features.len()];
                let frame = FeatureFrame {
                    start_s: t,
                    logits: head.logits(f),
                    features: f.clone(),
                    true_state: TrueState::Rest,
                };
                t += 0.125;
                i += 1;
                black_box(engine.step_frame(&frame, 0.9).unwrap())
            });
        });
    }
    group.finish();
}

fn knn(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let memory = FeatureMemory::from_rows(&gaussian_rows(&mut rng, 10_000, 16)).unwrap();
    let q = gaussian_rows(&mut rng, 1, 16).remove(0);
    c.bench_function("knn_k10_10000x16", |b| {
        b.iter(|| score_knn(black_box(&q), &memory, 10).unwrap())
    });
}

fn auroc_bench(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let id: Vec<f64> = (0..10_000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let ood: Vec<f64> = (0..10_000)
        .map(|_| 0.5 + Distribution::<f64>::sample(&StandardNormal, &mut rng))
        .collect();
    c.bench_function("auroc_10k_10k", |b| {
        b.iter(|| auroc(black_box(&id), black_box(&ood)).unwrap())
    });
}

criterion_group!(benches, engine_step, knn, auroc_bench);
criterion_main!(benches);
