use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use polycube::linalg::nnls;
use polycube::{build_g, check_ct, expm, lift, Tolerances, Vector};
use polycube_bench::{dense, ou, rotating};

fn bench_expm(c: &mut Criterion) {
    let mut group = c.benchmark_group("expm");
    for n in [6, 15, 28] {
        let m = dense(n, n, 1) * 0.5;
        group.bench_with_input(BenchmarkId::from_parameter(n), &m, |b, m| {
            b.iter(|| expm(black_box(m)).unwrap())
        });
    }
    group.finish();
}

fn bench_build_g(c: &mut Criterion) {
    let spec = rotating();
    let mut group = c.benchmark_group("build_g");
    for n in [2, 4, 6] {
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, &n| {
            b.iter(|| build_g(black_box(&spec), n).unwrap())
        });
    }
    group.finish();
}

fn bench_lift(c: &mut Criterion) {
    let tol = Tolerances::default();
    let g1 = build_g(&ou(), 4).unwrap();
    let g2 = build_g(&rotating(), 2).unwrap();
    c.bench_function("lift/ou_n4", |b| b.iter(|| lift(black_box(&g1), &tol).unwrap()));
    c.bench_function("lift/rotating_n2", |b| b.iter(|| lift(black_box(&g2), &tol).unwrap()));
}

fn bench_check_ct(c: &mut Criterion) {
    let tol = Tolerances::default();
    let g = build_g(&ou(), 1).unwrap();
    let points = vec![vec![0.0], vec![1.0]];
    c.bench_function("check_ct/ou_n1", |b| {
        b.iter(|| check_ct(black_box(&g), &points, &tol).unwrap())
    });
    let g2 = build_g(&ou(), 2).unwrap();
    let points: Vec<Vec<f64>> = (0..12).map(|k| vec![-2.0 + 0.4 * k as f64]).collect();
    c.bench_function("check_ct/ou_n2_12pts", |b| {
        b.iter(|| check_ct(black_box(&g2), &points, &tol).unwrap())
    });
}

fn bench_nnls(c: &mut Criterion) {
    let mut group = c.benchmark_group("nnls");
    for (m, n) in [(6, 12), (15, 40), (28, 80)] {
        let a = dense(m, n, 3);
        let b = &a * Vector::from_fn(n, |i, _| if i % 3 == 0 { 1.0 } else { 0.0 });
        group.bench_with_input(BenchmarkId::new("size", format!("{m}x{n}")), &(a, b), |bch, (a, b)| {
            bch.iter(|| nnls(black_box(a), black_box(b)))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_expm, bench_build_g, bench_lift, bench_check_ct, bench_nnls);
criterion_main!(benches);
