//! Criterion benchmarks for the hot paths of the toolkit: Morton ordering,
//! point encoding, box metrics, scale solving, response parsing, room-area
//! estimation, and dataset generation.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gst_core::align::{solve_scale, PointPairSet};
use gst_core::eval::{f1_at, iou3d};
use gst_core::fixtures::{reasoning_meta, reasoning_trajectory, COT_RESPONSE_EXAMPLE};
use gst_core::gcot::{generate_dataset, GenConfig, MockCotBackend};
use gst_core::patch::{encode_points, morton_order, EncoderConfig, WeightStore};
use gst_core::respond::parse_response;
use gst_core::scene::{compute_room_area, Aabb, Vec3};

fn cloud(n: usize, seed: u64, span: f64) -> (Vec<Vec3>, Vec<[f64; 3]>) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            Vec3::new(
                r.random_range(0.0..span),
                r.random_range(0.0..span),
                r.random_range(0.0..span),
            )
        })
        .collect();
    let colors = (0..n)
        .map(|_| {
            [
                r.random_range(0.0..1.0),
                r.random_range(0.0..1.0),
                r.random_range(0.0..1.0),
            ]
        })
        .collect();
    (points, colors)
}

fn boxes(n: usize, seed: u64) -> Vec<Aabb> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let min = Vec3::new(
                r.random_range(-3.0..3.0),
                r.random_range(-3.0..3.0),
                r.random_range(-3.0..3.0),
            );
            let e = Vec3::new(
                r.random_range(0.2..1.5),
                r.random_range(0.2..1.5),
                r.random_range(0.2..1.5),
            );
            Aabb::new(min, min + e).expect("box")
        })
        .collect()
}

fn bench_morton(c: &mut Criterion) {
    let (points, _) = cloud(4096, 1, 8.0);
    c.bench_function("morton_order/4096", |b| {
        b.iter(|| morton_order(black_box(&points), 0.05).expect("order"))
    });
}

fn bench_encode(c: &mut Criterion) {
    let cfg = EncoderConfig::default();
    let store = WeightStore::seeded(&cfg).expect("weights");
    let (points, colors) = cloud(1024, 2, 4.0);
    c.bench_function("encode_points/1024", |b| {
        b.iter(|| encode_points(black_box(&points), black_box(&colors), &store, &cfg).expect("encode"))
    });
}

fn bench_metrics(c: &mut Criterion) {
    let set = boxes(64, 3);
    c.bench_function("iou3d/pair", |b| {
        b.iter(|| {
            let mut acc = 0.0;
            for w in set.windows(2) {
                acc += iou3d(black_box(&w[0]), black_box(&w[1]));
            }
            acc
        })
    });
    let preds = boxes(16, 4);
    let gts = boxes(16, 5);
    c.bench_function("f1_at/16x16", |b| {
        b.iter(|| f1_at(black_box(&preds), black_box(&gts), 0.25).expect("f1"))
    });
}

fn bench_solve_scale(c: &mut Criterion) {
    let (src, _) = cloud(1000, 6, 4.0);
    let reference: Vec<Vec3> = src.iter().map(|p| p * 1.7).collect();
    let pairs = PointPairSet::from_slices(&src, &reference).expect("pairs");
    c.bench_function("solve_scale/1000", |b| {
        b.iter(|| solve_scale(black_box(&pairs)).expect("scale"))
    });
}

fn bench_parse(c: &mut Criterion) {
    c.bench_function("parse_response/reference", |b| {
        b.iter(|| parse_response(black_box(COT_RESPONSE_EXAMPLE)).expect("parse"))
    });
    let ast = parse_response(COT_RESPONSE_EXAMPLE).expect("parse").ast;
    c.bench_function("emit_response/reference", |b| b.iter(|| black_box(&ast).emit()));
}

fn bench_room_area(c: &mut Criterion) {
    let mut floor = Vec::new();
    for ix in 0..=60 {
        for iy in 0..=60 {
            floor.push(Vec3::new(ix as f64 * 0.05, iy as f64 * 0.05, 0.0));
        }
    }
    c.bench_function("compute_room_area/3721", |b| {
        b.iter(|| compute_room_area(black_box(&floor), 0.5).expect("area"))
    });
}

fn bench_generate(c: &mut Criterion) {
    let meta = reasoning_meta();
    let traj = reasoning_trajectory();
    let cfg = GenConfig::default();
    c.bench_function("generate_dataset/fixture", |b| {
        b.iter(|| {
            generate_dataset(
                black_box(&meta),
                Some(black_box(&traj)),
                None,
                &cfg,
                &MockCotBackend,
            )
            .expect("generate")
        })
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = bench_morton, bench_encode, bench_metrics, bench_solve_scale,
              bench_parse, bench_room_area, bench_generate
}
criterion_main!(benches);
