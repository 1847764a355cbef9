use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rsma_vlc::optimizer::l1::project_l1_ball;
use rsma_vlc::{build_channel, FixtureModel, NoiseMode, NoiseParams};
use rsma_vlc_bench::instance;

fn channel(c: &mut Criterion) {
    let (spec, _, _) = instance("scenario1_4led", 20.0);
    let params = NoiseParams::default();
    c.bench_function("build_channel/center_point", |b| {
        b.iter(|| build_channel(black_box(&spec.fixtures), &spec.users, NoiseMode::Physical, &params, FixtureModel::CenterPoint))
    });
    c.bench_function("build_channel/per_led", |b| {
        b.iter(|| build_channel(black_box(&spec.fixtures), &spec.users, NoiseMode::Physical, &params, FixtureModel::PerLed))
    });
}

fn projection(c: &mut Criterion) {
    let v: Vec<f64> = (0..16).map(|i| ((i * 7919) % 31) as f64 / 7.0 - 2.0).collect();
    c.bench_function("project_l1_ball/16", |b| {
        b.iter(|| {
            let mut x = v.clone();
            project_l1_ball(black_box(&mut x), 1.5);
            x
        })
    });
}

criterion_group!(benches, channel, projection);
criterion_main!(benches);
