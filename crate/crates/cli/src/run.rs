use std::collections::BTreeMap;

use gmfilter::factorization::inverse_identity_residual;
use gmfilter::{
    check_saddle_point, class_membership, expand_increment_operator, fourier_solution, minimality_on_grids,
    projection_oracle, solve_least_favorable, solve_semi_uncertain, DensityClassSpec, FilterContext, FrequencyGrid,
    MinimaxProblem,
};
use sha2::{Digest, Sha256};

use crate::config::{NoiseClassConfig, RunConfig, Task, NOISE, SIGNAL};
use crate::error::CliError;
use crate::report::{FactorSection, HRow, MinimaxSection, OracleRow, RunReport};

const FACTOR_TOL: f64 = 1e-8;
const INVERSE_TOL: f64 = 1e-10;
const CROSS_TOL: f64 = 1e-6;
const ORACLE_TOL: f64 = 1e-3;
const MEMBERSHIP_TOL: f64 = 1e-8;
const CROSS_DELTA_TOL: f64 = 1e-8;
const SADDLE_TOL: f64 = -1e-6;
const SIGN_TOL: f64 = 1e-8;
const GAP_TOL: f64 = 1e-6;

pub fn config_digest(config: &RunConfig) -> String {
    let canonical = serde_json::to_vec(config).expect("config serializes");
    Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
}

fn grid(size: usize) -> Result<FrequencyGrid, CliError> {
    FrequencyGrid::new(size).map_err(|e| CliError::Config(format!("`grid.size`: {e}")))
}

/// Executes `config.task`, composing the core modules.
pub fn run(config: &RunConfig) -> Result<RunReport, CliError> {
    let task = config.task.ok_or_else(|| CliError::Config("missing key `task`".into()))?;
    config.increment.validate().map_err(|e| CliError::Config(format!("`increment`: {e}")))?;
    let e = expand_increment_operator(&config.increment).map_err(CliError::core("increment"))?;
    let mut report = RunReport {
        task,
        config_digest: config_digest(config),
        n_gamma: e.degree(),
        e_gamma: e.coeffs,
        grid_size: None,
        minimality: None,
        factorization: None,
        delta_fact: None,
        delta_fourier: None,
        fourier_window: None,
        delta_oracle: Vec::new(),
        h_table: Vec::new(),
        minimax: None,
        tolerances: BTreeMap::new(),
        warnings: Vec::new(),
    };

    let filtering = matches!(task, Task::Factorize | Task::Filter | Task::Oracle | Task::Report);
    if filtering {
        filter_sections(config, task, &mut report)?;
    }
    if task == Task::Minimax || (task == Task::Report && config.minimax.is_some()) {
        minimax_section(config, &mut report)?;
    }
    report.check_finite()?;
    Ok(report)
}

fn tolerance(report: &mut RunReport, name: &str, tol: f64) {
    report.tolerances.insert(name.into(), tol);
}

fn filter_sections(config: &RunConfig, task: Task, report: &mut RunReport) -> Result<(), CliError> {
    let n = config.grid.size;
    let grid = grid(n)?;
    report.grid_size = Some(n);
    let f = config.density(SIGNAL, &grid)?;
    let g = config.density(NOISE, &grid)?;

    let mut levels = Vec::new();
    for size in [n / 4, n / 2] {
        if let Ok(coarse) = FrequencyGrid::new(size) {
            if let (Ok(fc), Ok(gc)) = (config.density(SIGNAL, &coarse), config.density(NOISE, &coarse)) {
                levels.push((fc, gc));
            }
        }
    }
    levels.push((f.clone(), g.clone()));
    let minimality = minimality_on_grids(&levels, &config.increment).map_err(CliError::core("spectral"))?;
    if minimality.suspect {
        report.warnings.push(format!(
            "minimality-suspect: inverse-density integral {:?} more than doubles under refinement {:?}",
            minimality.values, minimality.grid_sizes
        ));
    }
    report.minimality = Some(minimality);

    let ctx = FilterContext::new(&config.increment, &f, &g, config.truncation.l).map_err(CliError::core("factorization"))?;
    let inverse = inverse_identity_residual(&ctx.psi, &ctx.theta.series);
    tolerance(report, "factorization_residual", FACTOR_TOL);
    tolerance(report, "inverse_identity_residual", INVERSE_TOL);
    for (name, d) in [("theta", &ctx.theta.diagnostics), ("phi", &ctx.phi.diagnostics)] {
        if d.grid_residual > FACTOR_TOL {
            report.warnings.push(format!(
                "factorization_residual: {name} residual {:.3e} exceeds {FACTOR_TOL:e}",
                d.grid_residual
            ));
        }
    }
    if inverse > INVERSE_TOL {
        report.warnings.push(format!("inverse_identity_residual: {inverse:.3e} exceeds {INVERSE_TOL:e}"));
    }
    report.factorization =
        Some(FactorSection { theta: ctx.theta.diagnostics.clone(), phi: ctx.phi.diagnostics.clone(), inverse_identity_residual: inverse });
    if task == Task::Factorize {
        return Ok(());
    }

    let a = config.weights()?;
    let sol = ctx.filter_finite(a.clone()).map_err(CliError::core("filter"))?;
    report.warnings.extend(sol.diagnostics.warnings.iter().cloned());
    report.delta_fact = Some(sol.delta);
    report.h_table = grid
        .nodes()
        .iter()
        .zip(&sol.h)
        .map(|(&lambda, h)| HRow { lambda, re: h.iter().map(|z| z.re).collect(), im: h.iter().map(|z| z.im).collect() })
        .collect();

    let four = fourier_solution(&f, &g, &config.increment, a.clone(), config.truncation.k).map_err(CliError::core("oracle"))?;
    report.delta_fourier = Some(four.delta);
    report.fourier_window = Some(four.window);
    tolerance(report, "cross_path_relative", CROSS_TOL);
    let rel = (sol.delta - four.delta).abs() / sol.delta.max(1e-12);
    if rel > CROSS_TOL {
        report.warnings.push(format!("cross_path_relative: delta_fact and delta_fourier differ by {rel:.3e}"));
    }

    if matches!(task, Task::Oracle | Task::Report) {
        for &w in &config.truncation.w_obs {
            let delta = projection_oracle(&f, &g, &config.increment, &a, w).map_err(CliError::core("oracle"))?;
            report.delta_oracle.push(OracleRow { w_obs: w, delta });
        }
        tolerance(report, "oracle_relative", ORACLE_TOL);
        if let Some(last) = report.delta_oracle.iter().max_by_key(|r| r.w_obs) {
            let rel = (last.delta - sol.delta).abs() / sol.delta.max(1e-12);
            if rel > ORACLE_TOL {
                report.warnings.push(format!(
                    "oracle_relative: projection at W_obs = {} differs from delta_fact by {rel:.3e}",
                    last.w_obs
                ));
            }
        }
    }
    Ok(())
}

fn minimax_section(config: &RunConfig, report: &mut RunReport) -> Result<(), CliError> {
    let mc = config.minimax()?;
    let grid = grid(mc.grid_size.unwrap_or(config.grid.size))?;
    let a = config.weights()?;
    let problem = MinimaxProblem::new(&config.increment, a, &grid).map_err(CliError::core("minimax"))?;
    let signal = mc.signal.build(config, &grid)?;
    let classes = match &mc.noise {
        NoiseClassConfig::Ball { .. } => {
            let g = mc.noise.build_ball(config, &grid)?.expect("ball config builds a ball");
            DensityClassSpec::Pair { f: signal, g }
        }
        NoiseClassConfig::Known { density } => DensityClassSpec::SemiUncertain { f: signal, g: config.density(density, &grid)? },
    };
    let solution = match &classes {
        DensityClassSpec::Pair { .. } => solve_least_favorable(&problem, &classes, None, &mc.settings),
        DensityClassSpec::SemiUncertain { f, g } => solve_semi_uncertain(&problem, f, g, None, &mc.settings),
    }
    .map_err(CliError::core("minimax"))?;
    let (mf, mg) = class_membership(&solution.f0, &solution.g0, &classes, &problem.transfer);
    let saddle = check_saddle_point(&problem, &solution, &classes, mc.samples, mc.seed).map_err(CliError::core("minimax"))?;
    let delta_cross = problem.delta_cross(&solution.h0, &solution.f0, &solution.g0);

    for (name, tol) in [
        ("membership", MEMBERSHIP_TOL),
        ("delta_cross_relative", CROSS_DELTA_TOL),
        ("saddle_margin", SADDLE_TOL),
        ("multiplier_sign", SIGN_TOL),
        ("duality_gap_relative", GAP_TOL),
    ] {
        tolerance(report, name, tol);
    }
    let w = &mut report.warnings;
    for (name, m) in [("signal", &mf), ("noise", &mg)] {
        if m.violation > MEMBERSHIP_TOL {
            w.push(format!("membership: {name} violation {:.3e}", m.violation));
        }
    }
    let rel = (delta_cross - solution.delta0).abs() / solution.delta0.max(1e-300);
    if rel > CROSS_DELTA_TOL {
        w.push(format!("delta_cross_relative: {rel:.3e}"));
    }
    if let Some(r) = saddle.right_margin.filter(|&r| r < SADDLE_TOL) {
        w.push(format!("saddle_margin: right margin {r:.3e}"));
    }
    if !solution.subgradient.multipliers.signs_ok(SIGN_TOL) {
        w.push(format!("multiplier_sign: {:?}", solution.subgradient.multipliers));
    }
    let gap_rel = solution.gap / solution.delta0.max(1e-300);
    if gap_rel > GAP_TOL {
        w.push(format!("duality_gap_relative: certified gap {gap_rel:.3e} of delta0"));
    }
    w.extend(solution.warnings.iter().map(|s| format!("minimax: {s}")));

    let (fc, gfam) = match &classes {
        DensityClassSpec::Pair { f, g } => (f.family(), g.family()),
        DensityClassSpec::SemiUncertain { f, .. } => (f.family(), "known".to_string()),
    };
    report.minimax = Some(MinimaxSection {
        signal_family: fc,
        noise_family: gfam,
        grid_size: grid.size(),
        delta0: solution.delta0,
        gap: solution.gap,
        iterations: solution.iterations,
        delta_cross,
        signal_membership: mf,
        noise_membership: mg,
        saddle,
        subgradient: solution.subgradient.clone(),
    });
    Ok(())
}
