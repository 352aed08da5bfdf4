use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use hyperalign::barycenter::gyrobarycenters;
use hyperalign::eval::make_synthetic_task;
use hyperalign::ot::{build_cost_matrix, exact_ot, sinkhorn};
use hyperalign::{CostKind, PoincareBall, PointCloud, SinkhornConfig};

fn clouds(d: usize, n: usize) -> (PoincareBall, PointCloud, PointCloud) {
    let task = make_synthetic_task(d, n, 0.1, 1).expect("synthetic task");
    (task.ball, task.src, task.tgt)
}

fn bench_mobius(c: &mut Criterion) {
    let (ball, src, tgt) = clouds(5, 64);
    let (x, y) = (src.point(0), tgt.point(1));
    let q = ndarray::Array2::from_shape_fn((5, 5), |(i, j)| if i == j { 1.1 } else { 0.05 });
    let mut g = c.benchmark_group("mobius");
    g.bench_function("add", |b| {
        b.iter(|| ball.mobius_add(black_box(x), black_box(y)).unwrap())
    });
    g.bench_function("scalar_mul", |b| {
        b.iter(|| ball.mobius_scalar_mul(black_box(0.7), black_box(x)))
    });
    g.bench_function("matrix_mul", |b| {
        b.iter(|| {
            ball.mobius_matrix_mul(black_box(q.view()), black_box(x))
                .unwrap()
        })
    });
    g.bench_function("distance", |b| {
        b.iter(|| ball.distance(black_box(x), black_box(y)))
    });
    g.bench_function("exp_log", |b| {
        b.iter(|| {
            let v = ball.log_map(black_box(x), black_box(y));
            ball.exp_map(x, v.view())
        })
    });
    g.finish();
}

fn bench_sinkhorn(c: &mut Criterion) {
    let mut g = c.benchmark_group("sinkhorn");
    for n in [32, 64, 128] {
        let (ball, src, tgt) = clouds(5, n);
        let cost = build_cost_matrix(&src, &tgt, CostKind::SqHyperbolic, &ball).unwrap();
        for (name, cfg) in [
            ("newton", SinkhornConfig::default()),
            (
                "alternating",
                SinkhornConfig {
                    newton: false,
                    max_iters: 5000,
                    epsilon: 0.05,
                    ..Default::default()
                },
            ),
        ] {
            g.bench_with_input(BenchmarkId::new(name, n), &cost, |b, cost| {
                b.iter(|| sinkhorn(src.weights(), tgt.weights(), cost, &cfg).unwrap())
            });
        }
    }
    g.finish();
}

fn bench_exact(c: &mut Criterion) {
    let mut g = c.benchmark_group("exact_ot");
    // square instances go through permutations, rectangular ones through min-cost flow
    for (n, m) in [(6, 6), (8, 8), (7, 9)] {
        let (ball, src, tgt) = clouds(3, 16);
        let src = src.select(&(0..n).collect::<Vec<_>>()).unwrap();
        let tgt = tgt.select(&(0..m).collect::<Vec<_>>()).unwrap();
        let cost = build_cost_matrix(&src, &tgt, CostKind::SqHyperbolic, &ball).unwrap();
        g.bench_with_input(
            BenchmarkId::from_parameter(format!("{n}x{m}")),
            &cost,
            |b, cost| b.iter(|| exact_ot(src.weights(), tgt.weights(), cost).unwrap()),
        );
    }
    g.finish();
}

fn bench_gyrobarycenters(c: &mut Criterion) {
    let mut g = c.benchmark_group("gyrobarycenters");
    for n in [64, 256] {
        let (ball, src, tgt) = clouds(5, n);
        let cost = build_cost_matrix(&src, &tgt, CostKind::SqHyperbolic, &ball).unwrap();
        let plan = sinkhorn(
            src.weights(),
            tgt.weights(),
            &cost,
            &SinkhornConfig::default(),
        )
        .unwrap();
        g.bench_with_input(BenchmarkId::from_parameter(n), &plan, |b, plan| {
            b.iter(|| gyrobarycenters(&ball, plan.plan(), tgt.points()).unwrap())
        });
    }
    g.finish();
}

criterion_group!(
    benches,
    bench_mobius,
    bench_sinkhorn,
    bench_exact,
    bench_gyrobarycenters
);
criterion_main!(benches);
