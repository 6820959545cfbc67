use std::hint::black_box;

use aitv_core::prox::{prox_field_into, ProxParams};
use aitv_core::segment::{kmeans, KmeansConfig};
use aitv_core::solver::Operators;
use aitv_core::spectral::gaussian_kernel;
use aitv_core::{admm_smooth, grid, AdmmConfig, Exec, ImageGrid, RegMode, VectorField};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn image(n: usize) -> ImageGrid {
    ImageGrid::from_fn(n, n, |i, j| {
        let r = ((i as f64 - n as f64 / 2.0).powi(2) + (j as f64 - n as f64 / 3.0).powi(2)).sqrt();
        let base = if r < n as f64 / 4.0 { 0.8 } else { 0.25 };
        base + 0.05 * (((i * 31 + j * 17) % 23) as f64 / 23.0 - 0.5)
    })
}

fn prox(c: &mut Criterion) {
    let mut group = c.benchmark_group("prox_field");
    let w = grid::gradient(&image(512));
    let params = ProxParams::new(0.5, 0.8).unwrap();
    for (name, exec) in POLICIES {
        let mut out = VectorField::zeros(512, 512);
        group.bench_function(name, |b| {
            b.iter(|| prox_field_into(exec, black_box(&w), params, RegMode::Aitv, &mut out))
        });
    }
    group.finish();
}

fn blur(c: &mut Criterion) {
    let mut group = c.benchmark_group("blur");
    let kernel = gaussian_kernel(9, 9, 2.0).unwrap();
    let u = image(512);
    for (name, exec) in POLICIES {
        let ops = Operators::new(&kernel, 512, 512, exec).unwrap();
        group.bench_function(name, |b| b.iter(|| ops.blur_normal(black_box(&u))));
    }
    group.finish();
}

fn smooth(c: &mut Criterion) {
    let mut group = c.benchmark_group("admm_smooth");
    group.sample_size(10);
    let kernel = gaussian_kernel(7, 7, 1.5).unwrap();
    for n in [128, 256] {
        let f = image(n);
        for (name, exec) in POLICIES {
            let config = AdmmConfig {
                lambda: 4.0,
                exec,
                max_iter: 30,
                tol: 1e-15,
                ..Default::default()
            };
            group.bench_with_input(BenchmarkId::new(name, n), &f, |b, f| {
                b.iter(|| admm_smooth(f, &kernel, config).unwrap())
            });
        }
    }
    group.finish();
}

fn clustering(c: &mut Criterion) {
    let mut group = c.benchmark_group("kmeans");
    group.sample_size(10);
    let points = image(256).into_vec();
    for (name, exec) in POLICIES {
        let config = KmeansConfig {
            exec,
            ..KmeansConfig::default()
        };
        group.bench_function(name, |b| b.iter(|| kmeans(black_box(&points), 1, 4, &config).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, prox, blur, smooth, clustering);
criterion_main!(benches);
