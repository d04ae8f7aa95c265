use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gmfilter::*;
use gmfilter_bench::vector_fixture;
use nalgebra::DVector;
use std::hint::black_box;

fn expansion(c: &mut Criterion) {
    let spec = IncrementSpec::new(vec![1, 2, 3], vec![4, 3, 2], vec![4, 3, 2], 1).unwrap();
    c.bench_function("expand_three_patterns", |b| b.iter(|| expand_increment_operator(black_box(&spec)).unwrap()));
}

fn factorization(c: &mut Criterion) {
    let mut group = c.benchmark_group("factorize_vector");
    for n in [1024, 4096] {
        let (_, _, g, _) = vector_fixture(n);
        group.bench_with_input(BenchmarkId::from_parameter(n), &g, |b, g| b.iter(|| factorize(g, 256).unwrap()));
    }
    group.finish();
}

fn filtering(c: &mut Criterion) {
    let (spec, f, g, a) = vector_fixture(2048);
    c.bench_function("filter_context_new", |b| b.iter(|| FilterContext::new(&spec, &f, &g, 256).unwrap()));
    let ctx = FilterContext::new(&spec, &f, &g, 256).unwrap();
    c.bench_function("filter_finite", |b| b.iter(|| ctx.filter_finite(a.clone()).unwrap()));
    c.bench_function("fourier_solution", |b| {
        b.iter(|| fourier_solution(&f, &g, &spec, a.clone(), None).unwrap())
    });
    let mut group = c.benchmark_group("projection_oracle");
    for w in [64, 256] {
        group.bench_with_input(BenchmarkId::from_parameter(w), &w, |b, &w| {
            b.iter(|| projection_oracle(&f, &g, &spec, &a, w).unwrap())
        });
    }
    group.finish();
}

fn minimax(c: &mut Criterion) {
    let grid = FrequencyGrid::new(1024).unwrap();
    let p = MinimaxProblem::new(&IncrementSpec::simple(1, 1, 1), vec![DVector::from_element(1, 1.0)], &grid).unwrap();
    let classes = DensityClassSpec::Pair {
        f: SignalClass::d0(MomentConstraint::Trace(3.0)),
        g: NoiseClass {
            g1: MatrixDensityGrid::from_scalar_fn(&grid, DensityLabel::G, |_| 1.0),
            radius: BallRadius::Trace(0.1),
        },
    };
    let mut group = c.benchmark_group("minimax");
    group.sample_size(10);
    group.bench_function("scalar_trace_ball", |b| {
        b.iter(|| solve_least_favorable(&p, &classes, None, &SolverSettings::default()).unwrap())
    });
    group.finish();
}

criterion_group!(benches, expansion, factorization, filtering, minimax);
criterion_main!(benches);
