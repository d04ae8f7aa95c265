#![allow(dead_code)]

use gmfilter::{
    DensityLabel, DensitySpec, FrequencyGrid, IncrementSpec, MatrixDensityGrid, MatrixInput, TransferGrid,
};
use nalgebra::DVector;

pub const GRID: usize = 2048;
pub const TRUNCATION: usize = 256;

pub struct Fixture {
    pub name: &'static str,
    pub spec: IncrementSpec,
    pub f: MatrixDensityGrid,
    pub g: MatrixDensityGrid,
    pub a: Vec<DVector<f64>>,
}

pub fn spec(mu: &[u32], s: &[u32], d: &[u32], period: usize) -> IncrementSpec {
    IncrementSpec::new(mu.to_vec(), s.to_vec(), d.to_vec(), period).unwrap()
}

fn rows(m: &[&[f64]]) -> MatrixInput {
    MatrixInput::Real(m.iter().map(|r| r.to_vec()).collect())
}

/// `B(z) B(z)^* / |a(z)|^2` with scalar or 2x2 coefficient blocks, optionally
/// divided by the increment weight.
pub fn rational(
    grid: &FrequencyGrid,
    sp: &IncrementSpec,
    num: &[&[&[f64]]],
    den: &[f64],
    scaled: bool,
    label: DensityLabel,
) -> MatrixDensityGrid {
    let dim = num[0].len();
    let tr = TransferGrid::new(sp, grid).unwrap();
    let mut ds = DensitySpec::rational(num.iter().map(|m| rows(m)).collect(), den.to_vec());
    ds.increment_scaled = scaled;
    ds.evaluate(grid, dim, &tr, label).unwrap()
}

pub fn constant(grid: &FrequencyGrid, dim: usize, value: f64, label: DensityLabel) -> MatrixDensityGrid {
    MatrixDensityGrid::constant(grid, label, gmfilter::CMatrix::identity(dim, dim).scale(value).map(|x| x))
        .map(label, |_, v| v.map(|z| gmfilter::C64::new(z.re, 0.0)))
}

/// Deterministic weights `a(0..=n)` of dimension `dim`.
pub fn weights(n: usize, dim: usize, seed: f64) -> Vec<DVector<f64>> {
    (0..=n)
        .map(|k| DVector::from_fn(dim, |p, _| (1.3 * k as f64 + 0.7 * p as f64 + seed).sin() / (1.0 + 0.2 * k as f64)))
        .collect()
}

pub fn scalar(xs: &[f64]) -> Vec<DVector<f64>> {
    xs.iter().map(|&x| DVector::from_element(1, x)).collect()
}

pub fn benchmark(grid: &FrequencyGrid) -> Fixture {
    Fixture {
        name: "benchmark",
        spec: IncrementSpec::simple(1, 1, 1),
        f: constant(grid, 1, 1.0, DensityLabel::F),
        g: constant(grid, 1, 1.0, DensityLabel::G),
        a: scalar(&[1.0]),
    }
}

/// Fixtures without the benchmark, whose `|beta|^2 = lambda^2` noise term
/// is not smooth across `+-pi`.
pub fn smooth_suite(grid: &FrequencyGrid) -> Vec<Fixture> {
    suite(grid).into_iter().filter(|f| f.name != "benchmark").collect()
}

/// Eleven fixtures spanning `T in {1, 2}`, one or two increment patterns and
/// supports up to eight.
pub fn suite(grid: &FrequencyGrid) -> Vec<Fixture> {
    use DensityLabel::{F, G};
    let mut out = vec![benchmark(grid)];

    let sp = IncrementSpec::simple(1, 1, 1);
    out.push(Fixture {
        name: "ma1_ar1",
        f: rational(grid, &sp, &[&[&[1.0]], &[&[0.5]]], &[1.0], true, F),
        g: rational(grid, &sp, &[&[&[1.0]]], &[1.0, -0.6], false, G),
        a: scalar(&[1.0, -0.4, 0.3, 0.25]),
        spec: sp,
    });

    let sp = IncrementSpec::simple(1, 1, 1);
    out.push(Fixture {
        name: "unit_scaled",
        f: rational(grid, &sp, &[&[&[1.0]]], &[1.0], true, F),
        g: constant(grid, 1, 1.0, G),
        a: scalar(&[1.0]),
        spec: sp,
    });

    let sp = IncrementSpec::simple(1, 1, 2);
    out.push(Fixture {
        name: "second_difference",
        f: rational(grid, &sp, &[&[&[1.2]], &[&[0.3]]], &[1.0, 0.2], true, F),
        g: rational(grid, &sp, &[&[&[1.0]], &[&[0.4]]], &[1.0], false, G),
        a: weights(5, 1, 0.3),
        spec: sp,
    });

    let sp = spec(&[1, 1], &[1, 2], &[1, 1], 1);
    out.push(Fixture {
        name: "two_patterns",
        f: rational(grid, &sp, &[&[&[1.0]], &[&[-0.3]]], &[1.0], true, F),
        g: rational(grid, &sp, &[&[&[0.8]]], &[1.0, -0.5], false, G),
        a: weights(4, 1, 1.1),
        spec: sp,
    });

    let sp = spec(&[1, 2], &[1, 1], &[1, 1], 1);
    out.push(Fixture {
        name: "seasonal_pair",
        f: rational(grid, &sp, &[&[&[1.0]], &[&[0.5]], &[&[0.2]]], &[1.0], true, F),
        g: rational(grid, &sp, &[&[&[0.7]], &[&[0.2]]], &[1.0], false, G),
        a: weights(8, 1, 2.0),
        spec: sp,
    });

    let sp = IncrementSpec::simple(1, 2, 1);
    out.push(Fixture {
        name: "seasonal",
        f: rational(grid, &sp, &[&[&[1.0]]], &[1.0, -0.4], true, F),
        g: rational(grid, &sp, &[&[&[1.0]], &[&[-0.3]]], &[1.0], false, G),
        a: weights(6, 1, 0.5),
        spec: sp,
    });

    let b0: &[&[f64]] = &[&[1.0, 0.0], &[0.3, 0.8]];
    let b1: &[&[f64]] = &[&[0.3, 0.1], &[-0.2, 0.25]];
    let m0: &[&[f64]] = &[&[1.1, 0.2], &[0.0, 0.9]];
    let m1: &[&[f64]] = &[&[-0.4, 0.1], &[0.2, 0.3]];

    let sp = spec(&[1], &[1], &[1], 2);
    out.push(Fixture {
        name: "vector_unit",
        f: rational(grid, &sp, &[m0, m1], &[1.0], true, F),
        g: rational(grid, &sp, &[b0, b1], &[1.0], false, G),
        a: weights(3, 2, 0.9),
        spec: sp,
    });

    let sp = spec(&[1, 1], &[1, 2], &[1, 1], 2);
    out.push(Fixture {
        name: "vector_two_patterns",
        f: rational(grid, &sp, &[m0, m1], &[1.0, -0.3], true, F),
        g: rational(grid, &sp, &[b0, b1], &[1.0], false, G),
        a: weights(4, 2, 1.7),
        spec: sp,
    });

    let sp = spec(&[2], &[1], &[1], 2);
    let d0: &[&[f64]] = &[&[1.0, 0.0], &[0.0, 0.7]];
    let d1: &[&[f64]] = &[&[0.5, 0.0], &[0.0, -0.2]];
    out.push(Fixture {
        name: "vector_diagonal",
        f: rational(grid, &sp, &[d0, d1], &[1.0], true, F),
        g: rational(grid, &sp, &[d0], &[1.0, 0.3], false, G),
        a: weights(6, 2, 0.1),
        spec: sp,
    });

    let sp = spec(&[1, 2], &[1, 1], &[1, 1], 2);
    out.push(Fixture {
        name: "vector_seasonal_pair",
        f: rational(grid, &sp, &[b0, m1], &[1.0], true, F),
        g: rational(grid, &sp, &[m0, b1], &[1.0, 0.2], false, G),
        a: weights(8, 2, 2.4),
        spec: sp,
    });
    out
}
