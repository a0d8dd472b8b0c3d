use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ldfnet_core::losses::{grid_cost, sinkhorn};
use ldfnet_core::metrics::{match_points, match_points_greedy};
use ldfnet_core::{DenseArray, Graph, Point};

fn conv(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut group = c.benchmark_group("conv2d_3x3");
    for &(ch, side) in &[(16usize, 64usize), (64, 16)] {
        let x = DenseArray::from_fn(&[4, ch, side, side], |_| rng.random_range(-1.0..1.0));
        let w = DenseArray::from_fn(&[ch, ch, 3, 3], |_| rng.random_range(-0.1..0.1));
        group.bench_with_input(BenchmarkId::new("fwd_bwd", format!("{ch}ch_{side}px")), &(x, w), |b, (x, w)| {
            b.iter(|| {
                let mut g = Graph::new();
                let xv = g.param(x.clone());
                let wv = g.param(w.clone());
                let y = g.conv2d(xv, wv, None, 1, 1).unwrap();
                let s = g.sum(y);
                g.backward(s).unwrap()
            })
        });
    }
    group.finish();
}

fn ot(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("sinkhorn");
    for &side in &[8usize, 16] {
        let n = side * side;
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let sa: f64 = a.iter().sum();
        let a: Vec<f64> = a.iter().map(|v| v / sa).collect();
        let targets: Vec<(usize, usize)> = (0..20).map(|_| (rng.random_range(0..side), rng.random_range(0..side))).collect();
        let b = vec![1.0 / targets.len() as f64; targets.len()];
        let cost = grid_cost(side, side, &targets);
        let eps = 0.01 * cost.iter().copied().fold(0.0, f64::max);
        group.bench_function(BenchmarkId::from_parameter(format!("{side}x{side}_20pts")), |bch| {
            bch.iter(|| sinkhorn(&a, &b, &cost, eps, 500, 1e-8).unwrap())
        });
    }
    group.finish();
}

fn matching(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut pts = |k: usize| -> Vec<Point> {
        (0..k).map(|_| Point::new(rng.random_range(0.0..256.0), rng.random_range(0.0..256.0))).collect()
    };
    let (p, g) = (pts(200), pts(200));
    c.bench_function("match_points_hungarian_200", |b| b.iter(|| match_points(&p, &g, 8.0)));
    c.bench_function("match_points_greedy_200", |b| b.iter(|| match_points_greedy(&p, &g, 8.0)));
}

criterion_group!(benches, conv, ot, matching);
criterion_main!(benches);
