use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use egonav::diffusion::{default_schedule, hybrid_sample, DenoiserModel, SamplerConfig};
use egonav::geom::{panorama_project, EgoFrame, HORIZON};
use egonav::metrics::{brute_force_knn, KdIndex};
use egonav::nalgebra::Vector3;
use egonav::nn::denoiser_forward;
use egonav_bench::{denoiser, room_cloud};

fn knn(c: &mut Criterion) {
    let cloud = room_cloud();
    let pts: Vec<Vector3<f64>> = cloud.points.iter().map(|p| p.position).collect();
    let index = KdIndex::build(pts.clone());
    let queries: Vec<Vector3<f64>> = (0..64).map(|i| Vector3::new(0.3 * (i % 16) as f64, 0.25 * (i / 16) as f64, 1.2)).collect();
    let mut g = c.benchmark_group("knn20");
    g.bench_function("kdtree", |b| b.iter(|| queries.iter().map(|q| index.knn(black_box(q), 20).len()).sum::<usize>()));
    g.sample_size(10);
    g.bench_function("brute_force", |b| b.iter(|| queries.iter().map(|q| brute_force_knn(&pts, black_box(q), 20).len()).sum::<usize>()));
    g.finish();
}

fn projection(c: &mut Criterion) {
    let cloud = room_cloud();
    let ego = EgoFrame::identity();
    c.bench_function("panorama_project_96x32", |b| b.iter(|| panorama_project(black_box(&cloud), &ego, 96, 32).unwrap()));
}

fn denoiser_pass(c: &mut Criterion) {
    let (net, ps, x, cond) = denoiser();
    c.bench_function("denoiser_forward_b1", |b| b.iter(|| denoiser_forward(black_box(&x), &[500], &cond, &ps, &net).unwrap()));
}

fn sampler(c: &mut Criterion) {
    let (net, ps, _, cond) = denoiser();
    let model = DenoiserModel { net: &net, params: &ps };
    let sched = default_schedule();
    let cfg = SamplerConfig { batch: 15, ..SamplerConfig::default() };
    let mut g = c.benchmark_group("sampler");
    g.sample_size(10);
    g.bench_function("hybrid_20_10_b15", |b| {
        b.iter(|| hybrid_sample(&model, &cond, (HORIZON, net.cfg.feature_width()), &sched, &cfg).unwrap())
    });
    g.finish();
}

criterion_group!(benches, knn, projection, denoiser_pass, sampler);
criterion_main!(benches);
