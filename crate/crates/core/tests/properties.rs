use gmfilter::increment::{apply_increment, block_sequence, lift_functional, unblock_sequence};
use gmfilter::{
    expand_increment_operator, DensityLabel, FilterContext, FrequencyGrid, IncrementSpec, IndexedSeries,
    MatrixDensityGrid,
};
use nalgebra::DVector;
use proptest::prelude::*;

fn binom(n: u32, k: u32) -> i64 {
    (0..k).fold(1i64, |acc, i| acc * (n - i) as i64 / (i + 1) as i64)
}

/// Coefficients from the nested sum over `l_i in 0..=d_i` of
/// `prod (-1)^{l_i} C(d_i, l_i)` at lag `sum l_i mu_i s_i`.
fn nested_sum(spec: &IncrementSpec) -> Vec<i64> {
    let n = spec.n_gamma();
    let mut out = vec![0i64; n + 1];
    fn walk(spec: &IncrementSpec, i: usize, lag: usize, sign: i64, out: &mut [i64]) {
        if i == spec.patterns() {
            out[lag] += sign;
            return;
        }
        let step = (spec.mu[i] * spec.s[i]) as usize;
        for l in 0..=spec.d[i] {
            let c = binom(spec.d[i], l) * if l % 2 == 0 { 1 } else { -1 };
            walk(spec, i + 1, lag + l as usize * step, sign * c, out);
        }
    }
    walk(spec, 0, 0, 1, &mut out);
    out
}

fn small_spec() -> impl Strategy<Value = IncrementSpec> {
    (1usize..=3)
        .prop_flat_map(|r| {
            (
                prop::collection::vec(1u32..=4, r),
                prop::collection::vec(1u32..=4, r),
                prop::collection::vec(1u32..=4, r),
                1usize..=3,
            )
        })
        .prop_map(|(mu, s, d, t)| IncrementSpec::new(mu, s, d, t).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn expansion_matches_nested_sum(spec in small_spec()) {
        let e = expand_increment_operator(&spec).unwrap();
        prop_assert_eq!(e.degree(), spec.n_gamma());
        prop_assert_eq!(e.coeffs, nested_sum(&spec));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn expansion_vanishes_at_one_with_full_multiplicity(spec in small_spec()) {
        // chi(z) has a zero of order sum d_i at z = 1, so the first sum d_i
        // moments of e vanish.
        let e = expand_increment_operator(&spec).unwrap();
        for j in 0..spec.total_order() {
            let m: i128 = e.coeffs.iter().enumerate().map(|(k, &c)| c as i128 * (k as i128).pow(j)).sum();
            prop_assert_eq!(m, 0);
        }
    }

    #[test]
    fn apply_is_convolution(spec in small_spec(), xs in prop::collection::vec(-10.0f64..10.0, 80), start in -20i64..20) {
        let e = expand_increment_operator(&spec).unwrap().as_f64();
        let n = e.len() - 1;
        let series = IndexedSeries::from_scalars(start, &xs);
        if xs.len() <= n {
            prop_assert!(apply_increment(&series, &spec).is_err());
        } else {
            let out = apply_increment(&series, &spec).unwrap();
            prop_assert_eq!(out.len(), xs.len() - n);
            prop_assert_eq!(out.start, start + n as i64);
            for (i, v) in out.values.iter().enumerate() {
                let m = i + n;
                let want: f64 = (0..=n).map(|k| e[k] * xs[m - k]).sum();
                prop_assert!((v[0] - want).abs() <= 1e-9 * (1.0 + want.abs()));
            }
        }
    }

    #[test]
    fn blocking_round_trips(t in 1usize..=4, blocks in 1usize..12, k in -5i64..5, seed in prop::collection::vec(-5.0f64..5.0, 48)) {
        let xs = &seed[..blocks * t];
        let start = k * t as i64;
        let blocked = block_sequence(xs, start, t).unwrap();
        prop_assert_eq!(blocked.len(), blocks);
        let (s, back) = unblock_sequence(&blocked);
        prop_assert_eq!(s, start);
        prop_assert_eq!(back, xs.to_vec());
    }

    #[test]
    fn lifting_places_each_weight_once(t in 1usize..=4, a in prop::collection::vec(-3.0f64..3.0, 1..20)) {
        let lifted = lift_functional(&a, t).unwrap();
        prop_assert_eq!(lifted.len(), (a.len() - 1) / t + 1);
        for (m, v) in lifted.iter().enumerate() {
            for p in 0..t {
                let want = a.get(m * t + p).copied().unwrap_or(0.0);
                prop_assert_eq!(v[p], want);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn error_is_jointly_homogeneous(
        b in -0.7f64..0.7,
        q in -0.6f64..0.6,
        c in 0.05f64..20.0,
        a in prop::collection::vec(-2.0f64..2.0, 1..5),
    ) {
        let grid = FrequencyGrid::new(512).unwrap();
        let spec = IncrementSpec::simple(1, 1, 1);
        let ctx0 = FilterContext::new(&spec, &density(&grid, b, q, 1.0).0, &density(&grid, b, q, 1.0).1, 128).unwrap();
        let (fc, gc) = density(&grid, b, q, c);
        let ctx1 = FilterContext::new(&spec, &fc, &gc, 128).unwrap();
        let a: Vec<DVector<f64>> = a.into_iter().map(|x| DVector::from_element(1, x)).collect();
        let s0 = ctx0.filter_finite(a.clone()).unwrap();
        let s1 = ctx1.filter_finite(a).unwrap();
        prop_assert!((s1.delta - c * s0.delta).abs() <= 1e-9 * (1.0 + c * s0.delta));
        let dh = s0.h.iter().zip(&s1.h).map(|(x, y)| (x - y).camax()).fold(0.0, f64::max);
        prop_assert!(dh <= 1e-9);
    }
}

/// Smooth signal `c (1 + b^2 + 2 b cos)` scaled by the inverse increment
/// weight, and noise `c / |1 - q e^{-i lambda}|^2`.
fn density(grid: &FrequencyGrid, b: f64, q: f64, c: f64) -> (MatrixDensityGrid, MatrixDensityGrid) {
    let spec = IncrementSpec::simple(1, 1, 1);
    let tr = gmfilter::TransferGrid::new(&spec, grid).unwrap();
    let f = MatrixDensityGrid::from_scalar_fn(grid, DensityLabel::F, |l| c * (1.0 + b * b + 2.0 * b * l.cos()))
        .map(DensityLabel::F, |j, v| v.scale(tr.inverse_weight(j)));
    let g = MatrixDensityGrid::from_scalar_fn(grid, DensityLabel::G, |l| c / (1.0 + q * q - 2.0 * q * l.cos()));
    (f, g)
}
