mod common;

use gmfilter::filter::CVector;
use gmfilter::{
    filter_periodic, filter_periodic_single, fourier_coefficients, projection_oracle, windowed_factor_check,
    DensityLabel, FilterContext, FrequencyGrid, IncrementSpec, MatrixDensityGrid,
};
use nalgebra::DVector;

fn sup_gap(a: &[CVector], b: &[CVector]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).camax()).fold(0.0, f64::max)
}

#[test]
fn projection_oracle_converges_to_factorized_error() {
    let grid = FrequencyGrid::new(common::GRID).unwrap();
    let fixtures = common::suite(&grid).into_iter().filter(|f| matches!(f.name, "benchmark" | "vector_unit"));
    for fx in fixtures {
        let ctx = FilterContext::new(&fx.spec, &fx.f, &fx.g, common::TRUNCATION).unwrap();
        let target = ctx.filter_finite(fx.a.clone()).unwrap().delta;
        let values: Vec<f64> = [32, 64, 128, 256]
            .iter()
            .map(|&w| projection_oracle(&fx.f, &fx.g, &fx.spec, &fx.a, w).unwrap())
            .collect();
        println!("{}: target {target:.10} oracle {values:?}", fx.name);
        for pair in values.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12 * pair[0].abs(), "{}: {values:?}", fx.name);
        }
        let last = values[3];
        assert!((last - target).abs() <= 1e-3 * target, "{}: {last} vs {target}", fx.name);
    }
}

#[test]
fn unit_scaled_error_is_the_golden_ratio_conjugate() {
    // Frozen reference: f = 1/w, g = 1, a = [1] on the simple unit increment.
    let grid = FrequencyGrid::new(common::GRID).unwrap();
    let fx = common::suite(&grid).into_iter().find(|f| f.name == "unit_scaled").unwrap();
    let ctx = FilterContext::new(&fx.spec, &fx.f, &fx.g, common::TRUNCATION).unwrap();
    let delta = ctx.filter_finite(fx.a).unwrap().delta;
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    assert!((delta - golden).abs() < 1e-10, "{delta}");
}

#[test]
fn zero_noise_and_zero_functional_give_zero_error() {
    let grid = FrequencyGrid::new(common::GRID).unwrap();
    for fx in common::suite(&grid) {
        let g0 = MatrixDensityGrid::zeros(&grid, DensityLabel::G, fx.spec.period);
        let ctx = FilterContext::new(&fx.spec, &fx.f, &g0, common::TRUNCATION).unwrap();
        let s = ctx.filter_finite(fx.a.clone()).unwrap();
        let h_max = s.h.iter().map(|v| v.camax()).fold(0.0, f64::max);
        assert!(s.delta.abs() <= 1e-12 && h_max <= 1e-12, "{}: {} {h_max}", fx.name, s.delta);

        let ctx = FilterContext::new(&fx.spec, &fx.f, &fx.g, common::TRUNCATION).unwrap();
        let zero = vec![DVector::zeros(fx.spec.period); fx.a.len()];
        let s = ctx.filter_finite(zero).unwrap();
        assert!(s.delta.abs() <= 1e-12, "{}: {}", fx.name, s.delta);
    }
}

#[test]
fn joint_scaling_scales_error_and_keeps_characteristic() {
    let grid = FrequencyGrid::new(common::GRID).unwrap();
    for fx in common::suite(&grid) {
        let base = FilterContext::new(&fx.spec, &fx.f, &fx.g, common::TRUNCATION).unwrap().filter_finite(fx.a.clone()).unwrap();
        for c in [0.1, 3.0, 10.0] {
            let ctx = FilterContext::new(&fx.spec, &fx.f.scaled(c), &fx.g.scaled(c), common::TRUNCATION).unwrap();
            let s = ctx.filter_finite(fx.a.clone()).unwrap();
            let rel = (s.delta - c * base.delta).abs() / (c * base.delta);
            assert!(rel <= 1e-9, "{} c={c}: {rel:e}", fx.name);
            assert!(sup_gap(&s.h, &base.h) <= 1e-9, "{} c={c}", fx.name);
        }
    }
}

#[test]
fn single_value_matches_general_pipeline() {
    let grid = FrequencyGrid::new(common::GRID).unwrap();
    for fx in common::suite(&grid) {
        let ctx = FilterContext::new(&fx.spec, &fx.f, &fx.g, common::TRUNCATION).unwrap();
        let n_gamma = ctx.e_gamma.len() - 1;
        for big_n in [n_gamma, n_gamma + 3] {
            for p in 0..ctx.dim() {
                let single = ctx.filter_single_value(big_n, p).unwrap();
                let mut a = vec![DVector::zeros(ctx.dim()); big_n + 1];
                a[big_n][p] = 1.0;
                let general = ctx.filter_finite(a).unwrap();
                let dd = (single.delta - general.delta).abs();
                assert!(dd <= 1e-9, "{} N={big_n} p={p}: {dd:e}", fx.name);
                assert!(sup_gap(&single.h, &general.h) <= 1e-9, "{} N={big_n} p={p}", fx.name);
            }
        }
    }
}

#[test]
fn periodic_wrapper_with_unit_period_is_the_vector_path() {
    let grid = FrequencyGrid::new(common::GRID).unwrap();
    for fx in common::suite(&grid).into_iter().filter(|f| f.spec.period == 1) {
        let ctx = FilterContext::new(&fx.spec, &fx.f, &fx.g, common::TRUNCATION).unwrap();
        let w: Vec<f64> = fx.a.iter().map(|v| v[0]).collect();
        let wrapped = filter_periodic(&ctx, &w).unwrap();
        let direct = ctx.filter_finite(fx.a.clone()).unwrap();
        assert_eq!(wrapped.delta, direct.delta, "{}", fx.name);
        assert_eq!(wrapped.h, direct.h, "{}", fx.name);

        let m = w.len() + 1;
        let single = filter_periodic_single(&ctx, m).unwrap();
        let general = ctx.filter_single_value(m, 0).unwrap();
        assert_eq!(single.delta, general.delta, "{}", fx.name);
    }
}

#[test]
fn periodic_single_value_picks_the_right_coordinate() {
    let grid = FrequencyGrid::new(common::GRID).unwrap();
    let fx = common::suite(&grid).into_iter().find(|f| f.name == "vector_unit").unwrap();
    let ctx = FilterContext::new(&fx.spec, &fx.f, &fx.g, common::TRUNCATION).unwrap();
    // M = 5 with T = 2 is block 2, coordinate 1.
    let s = filter_periodic_single(&ctx, 5).unwrap();
    let g = ctx.filter_single_value(2, 1).unwrap();
    assert_eq!(s.delta, g.delta);
}

fn window_residuals(grid_size: usize, spec: &IncrementSpec, f: &MatrixDensityGrid) -> Vec<f64> {
    let g = MatrixDensityGrid::zeros(&f.grid, DensityLabel::G, 1);
    let ctx = FilterContext::new(spec, f, &g, 512).unwrap();
    let set = fourier_coefficients(f, &g, spec, 300).unwrap();
    let checks = windowed_factor_check(&set, &ctx.theta.series, &ctx.psi, &[16, 32, 64, 128]).unwrap();
    let out: Vec<f64> = checks.iter().map(|c| c.psi_residual.max(c.identity_residual)).collect();
    println!("N={grid_size}: {out:?}");
    out
}

#[test]
fn windowed_factor_identities_tighten_with_window() {
    let spec = IncrementSpec::simple(1, 1, 1);
    let grid = FrequencyGrid::new(4096).unwrap();
    let cases = [
        common::rational(&grid, &spec, &[&[&[1.0]], &[&[0.8]]], &[1.0, -0.85], true, DensityLabel::F),
        {
            let ma = common::rational(&grid, &spec, &[&[&[1.0]], &[&[0.6]], &[&[-0.2]]], &[1.0], true, DensityLabel::F);
            ma.map(DensityLabel::F, |j, v| v.scale(1.2 + 0.5 * grid.node(j).cos()))
        },
    ];
    for f in &cases {
        let r = window_residuals(4096, &spec, f);
        for pair in r.windows(2) {
            assert!(pair[1] < pair[0], "{r:?}");
        }
        assert!(r[3] <= 1e-4, "{r:?}");
    }
}
