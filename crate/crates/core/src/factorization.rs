//! Canonical (causal, minimum-phase) factorization `S = Phi Phi^*` of matrix
//! spectral densities on the grid.
//!
//! Scalar densities use the cepstral method `Phi = exp([log S]_+)`; matrix
//! densities use Wilson's Newton iteration. The factor is kept both as exact
//! grid values and as a coefficient series truncated at `L`.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{CMatrix, FrequencyGrid, C64};
use crate::spectral::{min_eigenvalue, MatrixDensityGrid, TransferGrid};

/// Default series truncation.
pub const DEFAULT_TRUNCATION: usize = 256;
/// Relative reconstruction tolerance for an accepted factorization.
pub const TOL_FACT: f64 = 1e-8;
/// Smallest admissible eigenvalue, relative to the density sup-norm.
pub const EPS_PD: f64 = 1e-10;
/// Iteration cap for the matrix method.
pub const MAX_WILSON_ITER: usize = 200;
/// Relative tail energy above which a truncation warning is raised.
pub const TAIL_WARN: f64 = 1e-10;

/// One-sided coefficient sequence `c(0..L)`.
#[derive(Debug, Clone)]
pub struct CausalMatrixSeries {
    pub coeffs: Vec<CMatrix>,
}

impl CausalMatrixSeries {
    pub fn new(coeffs: Vec<CMatrix>) -> Self {
        CausalMatrixSeries { coeffs }
    }

    pub fn identity(dim: usize, len: usize) -> Self {
        let mut coeffs = vec![CMatrix::zeros(dim, dim); len];
        coeffs[0] = CMatrix::identity(dim, dim);
        CausalMatrixSeries { coeffs }
    }

    pub fn scalar(xs: &[f64]) -> Self {
        CausalMatrixSeries { coeffs: xs.iter().map(|&x| CMatrix::from_element(1, 1, C64::new(x, 0.0))).collect() }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.coeffs[0].nrows()
    }

    pub fn cols(&self) -> usize {
        self.coeffs[0].ncols()
    }

    /// `c(k)`, zero beyond the truncation.
    pub fn at(&self, k: usize) -> Option<&CMatrix> {
        self.coeffs.get(k)
    }

    /// Grid values of `sum_k c(k) e^{-i lambda k}`.
    pub fn evaluate(&self, grid: &FrequencyGrid) -> Vec<CMatrix> {
        grid.matrix_evaluate(&self.coeffs, 0)
    }

    /// Energy `sum ||c(k)||_F^2` over `k >= from`.
    pub fn energy_from(&self, from: usize) -> f64 {
        self.coeffs.iter().skip(from).map(|c| c.norm_squared()).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        CausalMatrixSeries { coeffs: self.coeffs.iter().map(|c| c.scale(s)).collect() }
    }
}

/// Two-sided covariance sequence `g(-(L-1)..=L-1)`.
#[derive(Debug, Clone)]
pub struct CovarianceSeries {
    max_lag: usize,
    values: Vec<CMatrix>,
}

impl CovarianceSeries {
    pub fn max_lag(&self) -> usize {
        self.max_lag
    }

    /// `g(k)`, zero outside the stored range.
    pub fn at(&self, k: i64) -> CMatrix {
        let dim = self.values[0].nrows();
        if k.unsigned_abs() as usize > self.max_lag {
            return CMatrix::zeros(dim, dim);
        }
        self.values[(k + self.max_lag as i64) as usize].clone()
    }

    /// `conj(g(k))`, the form entering the filter formulas.
    pub fn conj_at(&self, k: i64) -> CMatrix {
        self.at(k).map(|x| x.conj())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FactorMethod {
    Cepstral,
    Wilson,
    Zero,
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorDiagnostics {
    pub method: FactorMethod,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    /// `sup_j ||S - Phi Phi^*||_F / sup ||S||` with exact grid factor values.
    pub grid_residual: f64,
    /// Same with the factor rebuilt from the truncated series.
    pub series_residual: f64,
    /// Relative energy of coefficients from `L - L/8` up to half the grid.
    pub tail_energy: f64,
    pub warnings: Vec<String>,
}

/// A canonical factor as grid values and truncated series.
#[derive(Debug, Clone)]
pub struct Factorization {
    pub series: CausalMatrixSeries,
    pub grid_values: Vec<CMatrix>,
    pub diagnostics: FactorDiagnostics,
}

impl Factorization {
    /// Grid values of the inverse factor.
    pub fn inverse_grid_values(&self) -> Result<Vec<CMatrix>> {
        self.grid_values
            .iter()
            .enumerate()
            .map(|(j, m)| m.clone().try_inverse().ok_or(Error::SingularDensity { node: j, lambda: f64::NAN }))
            .collect()
    }
}

fn sup_relative_residual(values: &[CMatrix], factor: &[CMatrix], scale: f64) -> f64 {
    values
        .iter()
        .zip(factor)
        .map(|(s, p)| (s - p * p.adjoint()).norm())
        .fold(0.0, f64::max)
        / scale
}

/// Exact grid values of the canonical factor, with method, Wilson residual
/// history and density scale.
fn factor_values(density: &MatrixDensityGrid, tol: f64) -> Result<(Vec<CMatrix>, FactorMethod, Vec<f64>, f64)> {
    let grid = &density.grid;
    let dim = density.dim();
    let scale = density.sup_norm();
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::NotPositiveDefinite { node: 0, lambda: grid.node(0), min_eig: 0.0 });
    }
    for (j, v) in density.values.iter().enumerate() {
        let m = min_eigenvalue(v);
        if !(m >= EPS_PD * scale) {
            return Err(Error::NotPositiveDefinite { node: j, lambda: grid.node(j), min_eig: m });
        }
    }

    let (mut grid_values, method, history) = if dim == 1 {
        (cepstral(density), FactorMethod::Cepstral, Vec::new())
    } else {
        let (vals, hist) = wilson(density, scale, tol)?;
        (vals, FactorMethod::Wilson, hist)
    };
    if dim > 1 {
        normalize_leading(grid, &mut grid_values);
    }

    Ok((grid_values, method, history, scale))
}

/// Grid values of the canonical factor without series extraction. Fails when
/// the reconstruction residual exceeds the factorization tolerance.
pub fn grid_factor(density: &MatrixDensityGrid) -> Result<Vec<CMatrix>> {
    grid_factor_with_tolerance(density, TOL_FACT)
}

/// [`grid_factor`] with a caller-chosen residual tolerance. Matrix densities
/// whose factor coefficients decay slowly stall above `TOL_FACT` on coarse
/// grids.
pub fn grid_factor_with_tolerance(density: &MatrixDensityGrid, tol: f64) -> Result<Vec<CMatrix>> {
    let (values, _, history, scale) = factor_values(density, tol)?;
    let res = sup_relative_residual(&density.values, &values, scale);
    if res > tol {
        return Err(Error::NonConvergence { iterations: history.len(), history: vec![res] });
    }
    Ok(values)
}

/// Canonical factorization of a strictly positive definite density.
pub fn factorize(density: &MatrixDensityGrid, truncation: usize) -> Result<Factorization> {
    let grid = &density.grid;
    if truncation == 0 || truncation > grid.size() / 2 {
        return Err(Error::OutOfRange(format!(
            "truncation {truncation} must lie in 1..={}",
            grid.size() / 2
        )));
    }
    let (grid_values, method, history, scale) = factor_values(density, TOL_FACT)?;

    let half = grid.size() / 2;
    let all = grid.matrix_coefficients(&grid_values, 0, half);
    let series = CausalMatrixSeries::new(all[..truncation].to_vec());
    let total: f64 = all.iter().map(|c| c.norm_squared()).sum();
    let tail_from = truncation - truncation / 8;
    let tail: f64 = all[tail_from..].iter().map(|c| c.norm_squared()).sum();
    let tail_energy = if total > 0.0 { tail / total } else { 0.0 };

    let grid_residual = sup_relative_residual(&density.values, &grid_values, scale);
    let rebuilt = series.evaluate(grid);
    let series_residual = sup_relative_residual(&density.values, &rebuilt, scale);

    if grid_residual > TOL_FACT {
        return Err(Error::NonConvergence {
            iterations: history.len(),
            history: if history.is_empty() { vec![grid_residual] } else { history },
        });
    }
    let mut warnings = Vec::new();
    if series_residual > TOL_FACT {
        warnings.push(format!(
            "truncated factor residual {series_residual:.3e} exceeds {TOL_FACT:.0e}; coefficients decay slowly"
        ));
    }
    if tail_energy > TAIL_WARN {
        warnings.push(format!("relative tail energy {tail_energy:.3e} exceeds {TAIL_WARN:.0e}"));
    }
    Ok(Factorization {
        series,
        grid_values,
        diagnostics: FactorDiagnostics {
            method,
            iterations: history.len(),
            residual_history: history,
            grid_residual,
            series_residual,
            tail_energy,
            warnings,
        },
    })
}

/// Factorization that accepts the zero density (no noise), returning the zero factor.
pub fn factorize_or_zero(density: &MatrixDensityGrid, truncation: usize) -> Result<Factorization> {
    if density.is_zero() {
        let dim = density.dim();
        return Ok(Factorization {
            series: CausalMatrixSeries::new(vec![CMatrix::zeros(dim, dim); truncation]),
            grid_values: vec![CMatrix::zeros(dim, dim); density.grid.size()],
            diagnostics: FactorDiagnostics {
                method: FactorMethod::Zero,
                iterations: 0,
                residual_history: Vec::new(),
                grid_residual: 0.0,
                series_residual: 0.0,
                tail_energy: 0.0,
                warnings: Vec::new(),
            },
        });
    }
    factorize(density, truncation)
}

fn cepstral(density: &MatrixDensityGrid) -> Vec<CMatrix> {
    let grid = &density.grid;
    let logs: Vec<C64> = density.values.iter().map(|v| C64::new(v[(0, 0)].re.ln(), 0.0)).collect();
    grid.split_part(&logs)
        .into_iter()
        .map(|x| CMatrix::from_element(1, 1, x.exp()))
        .collect()
}

fn wilson(density: &MatrixDensityGrid, scale: f64, tol: f64) -> Result<(Vec<CMatrix>, Vec<f64>)> {
    let grid = &density.grid;
    let dim = density.dim();
    let c0 = grid.matrix_coefficients(&density.values, 0, 1).remove(0);
    let c0 = (&c0 + c0.adjoint()).scale(0.5);
    let chol = c0.cholesky().ok_or(Error::NotPositiveDefinite {
        node: 0,
        lambda: f64::NAN,
        min_eig: min_eigenvalue(&density.values[0]),
    })?;
    let mut psi = vec![chol.l(); grid.size()];
    let eye = CMatrix::identity(dim, dim);
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut stall = 0;
    for _ in 0..MAX_WILSON_ITER {
        let mut g = Vec::with_capacity(grid.size());
        for (p, s) in psi.iter().zip(&density.values) {
            let inv = p.clone().try_inverse().ok_or_else(|| Error::SingularLeading("Wilson iterate".into()))?;
            g.push(&inv * s * inv.adjoint() + &eye);
        }
        let plus = grid.matrix_split_part(&g);
        for (p, q) in psi.iter_mut().zip(&plus) {
            *p = &*p * q;
        }
        let res = sup_relative_residual(&density.values, &psi, scale);
        history.push(res);
        if res < 1e-14 {
            break;
        }
        if res < best * 0.5 {
            best = res;
            stall = 0;
        } else {
            stall += 1;
            if stall >= 3 && res <= tol {
                break;
            }
        }
    }
    let last = history.last().copied().unwrap_or(f64::INFINITY);
    if !(last <= tol) {
        return Err(Error::NonConvergence { iterations: history.len(), history });
    }
    Ok((psi, history))
}

/// Right-multiplies the factor by a constant unitary so that its lag-zero
/// coefficient is lower triangular with positive diagonal.
fn normalize_leading(grid: &FrequencyGrid, values: &mut [CMatrix]) {
    let c0 = grid.matrix_coefficients(values, 0, 1).remove(0);
    let qr = c0.adjoint().qr();
    let q = qr.q();
    let m = &c0 * &q;
    let dim = m.nrows();
    let d = CMatrix::from_fn(dim, dim, |i, j| {
        if i == j && m[(i, i)].norm() > 0.0 {
            m[(i, i)].conj() / m[(i, i)].norm()
        } else if i == j {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let u = q * d;
    for v in values.iter_mut() {
        *v = &*v * &u;
    }
}

/// Factor `Theta` of `(|chi|^2 / |beta|^2) p`, the observed-increment density.
pub fn weighted_observed_factor(
    p: &MatrixDensityGrid,
    transfer: &TransferGrid,
    truncation: usize,
) -> Result<Factorization> {
    for (j, c) in transfer.chi.iter().enumerate() {
        if c.norm() < 1e-13 {
            return Err(Error::VanishingTransfer { node: j });
        }
    }
    let x = p.map(p.label, |j, v| v.scale(transfer.weight(j)));
    factorize(&x, truncation)
}

/// Coefficients of the inverse series `Psi = Theta^{-1}` by recursion.
pub fn invert_factor(theta: &CausalMatrixSeries) -> Result<CausalMatrixSeries> {
    let inv0 = theta.coeffs[0]
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularLeading("theta(0) is not invertible".into()))?;
    let len = theta.len();
    let mut psi: Vec<CMatrix> = Vec::with_capacity(len);
    psi.push(inv0.clone());
    for k in 1..len {
        let mut acc = CMatrix::zeros(theta.cols(), theta.rows());
        for j in 1..=k {
            acc += &theta.coeffs[j] * &psi[k - j];
        }
        psi.push(-(&inv0 * acc));
    }
    Ok(CausalMatrixSeries::new(psi))
}

/// Max over `k < L` of `||sum_j psi(j) theta(k - j) - delta_k I||`.
pub fn inverse_identity_residual(psi: &CausalMatrixSeries, theta: &CausalMatrixSeries) -> f64 {
    let len = psi.len().min(theta.len());
    let dim = psi.rows();
    (0..len)
        .map(|k| {
            let mut acc = if k == 0 { -CMatrix::identity(dim, dim) } else { CMatrix::zeros(dim, dim) };
            for j in 0..=k {
                acc += &psi.coeffs[j] * &theta.coeffs[k - j];
            }
            acc.norm()
        })
        .fold(0.0, f64::max)
}

/// `g(k) = sum_{m >= max(0,-k)} phi(m) phi^*(k+m)` within the truncation.
pub fn covariances_from_factor(phi: &CausalMatrixSeries) -> CovarianceSeries {
    let len = phi.len();
    let max_lag = len - 1;
    let dim = phi.rows();
    let values = (-(max_lag as i64)..=max_lag as i64)
        .map(|k| {
            let mut acc = CMatrix::zeros(dim, dim);
            let m0 = (-k).max(0) as usize;
            let m1 = (len as i64 - k.max(0)) as usize;
            for m in m0..m1 {
                acc += &phi.coeffs[m] * phi.coeffs[(m as i64 + k) as usize].adjoint();
            }
            acc
        })
        .collect();
    CovarianceSeries { max_lag, values }
}

/// Roots of a real or complex scalar polynomial `sum c_k z^k` via the
/// companion matrix; used for minimum-phase checks.
pub fn polynomial_roots(coeffs: &[C64]) -> Vec<C64> {
    let mut c = coeffs.to_vec();
    while c.len() > 1 && c.last().is_some_and(|x| x.norm() < 1e-300) {
        c.pop();
    }
    let deg = c.len() - 1;
    if deg == 0 {
        return Vec::new();
    }
    let lead = c[deg];
    let comp = DMatrix::from_fn(deg, deg, |i, j| {
        if i == 0 {
            -c[deg - 1 - j] / lead
        } else if i == j + 1 {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let (_, t) = comp.schur().unpack();
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::DensityLabel;

    fn grid() -> FrequencyGrid {
        FrequencyGrid::new(512).unwrap()
    }

    #[test]
    fn constant_density() {
        let g = grid();
        let d = MatrixDensityGrid::constant(&g, DensityLabel::G, CMatrix::from_element(1, 1, C64::new(4.0, 0.0)));
        let f = factorize(&d, 32).unwrap();
        assert!((f.series.coeffs[0][(0, 0)] - C64::new(2.0, 0.0)).norm() < 1e-13);
        assert!(f.series.coeffs[1..].iter().all(|c| c.norm() < 1e-13));
    }

    #[test]
    fn ma1_density() {
        let g = grid();
        let d = MatrixDensityGrid::from_scalar_fn(&g, DensityLabel::G, |l| 1.25 - l.cos());
        let f = factorize(&d, 32).unwrap();
        let c: Vec<f64> = f.series.coeffs.iter().map(|m| m[(0, 0)].re).collect();
        assert!((c[0] - 1.0).abs() < 1e-13 && (c[1] + 0.5).abs() < 1e-13);
        assert!(c[2..].iter().all(|x| x.abs() < 1e-13));
        assert!(f.diagnostics.grid_residual < 1e-13);
    }

    #[test]
    fn diagonal_matrix_density_matches_scalar_factors() {
        let g = grid();
        let d = MatrixDensityGrid::from_fn(&g, DensityLabel::G, |l| {
            let mut m = CMatrix::zeros(2, 2);
            m[(0, 0)] = C64::new(1.0 + 0.36 - 1.2 * l.cos(), 0.0);
            m[(1, 1)] = C64::new(2.0, 0.0);
            m
        })
        .unwrap();
        let f = factorize(&d, 32).unwrap();
        assert_eq!(f.diagnostics.method, FactorMethod::Wilson);
        let c0 = &f.series.coeffs[0];
        let c1 = &f.series.coeffs[1];
        assert!((c0[(0, 0)].re - 1.0).abs() < 1e-10 && (c1[(0, 0)].re + 0.6).abs() < 1e-10);
        assert!((c0[(1, 1)].re - 2f64.sqrt()).abs() < 1e-10);
        assert!(c0[(0, 1)].norm() < 1e-10 && c0[(1, 0)].norm() < 1e-10 && c1[(1, 1)].norm() < 1e-10);
    }

    #[test]
    fn leading_coefficient_is_pinned() {
        let g = grid();
        let d = MatrixDensityGrid::from_fn(&g, DensityLabel::G, |l| {
            let z = C64::from_polar(1.0, -l);
            let b = CMatrix::from_row_slice(
                2,
                2,
                &[C64::new(1.0, 0.0) + z * 0.4, z * 0.3, C64::new(0.5, 0.0), C64::new(1.0, 0.0) - z * 0.2],
            );
            &b * b.adjoint()
        })
        .unwrap();
        let f = factorize(&d, 64).unwrap();
        let c0 = &f.series.coeffs[0];
        assert!(c0[(0, 1)].norm() < 1e-12);
        assert!(c0[(0, 0)].re > 0.0 && c0[(1, 1)].re > 0.0);
        assert!(c0[(0, 0)].im.abs() < 1e-12 && c0[(1, 1)].im.abs() < 1e-12);
        assert!(f.diagnostics.series_residual < 1e-10);
    }

    #[test]
    fn rejects_indefinite() {
        let g = grid();
        let d = MatrixDensityGrid::from_scalar_fn(&g, DensityLabel::G, |l| l.cos());
        assert!(matches!(factorize(&d, 16), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn geometric_inverse() {
        let theta = CausalMatrixSeries::scalar(&[1.0, -0.5, 0.0, 0.0, 0.0, 0.0]);
        let psi = invert_factor(&theta).unwrap();
        for (k, c) in psi.coeffs.iter().enumerate() {
            assert!((c[(0, 0)].re - 0.5f64.powi(k as i32)).abs() < 1e-15);
        }
        assert!(inverse_identity_residual(&psi, &theta) < 1e-15);
        let id = invert_factor(&CausalMatrixSeries::identity(3, 4)).unwrap();
        assert!(inverse_identity_residual(&id, &CausalMatrixSeries::identity(3, 4)) == 0.0);
    }

    #[test]
    fn ma1_covariances() {
        let b = 0.7;
        let g = covariances_from_factor(&CausalMatrixSeries::scalar(&[1.0, b]));
        assert!((g.at(0)[(0, 0)].re - (1.0 + b * b)).abs() < 1e-15);
        assert!((g.at(1)[(0, 0)].re - b).abs() < 1e-15);
        assert!((g.at(-1)[(0, 0)].re - b).abs() < 1e-15);
        assert!(g.at(2)[(0, 0)].norm() == 0.0);
        let w = covariances_from_factor(&CausalMatrixSeries::identity(2, 3));
        assert_eq!(w.at(0), CMatrix::identity(2, 2));
        assert_eq!(w.at(1), CMatrix::zeros(2, 2));
    }

    #[test]
    fn roots_of_quadratic() {
        let r = polynomial_roots(&[C64::new(2.0, 0.0), C64::new(-3.0, 0.0), C64::new(1.0, 0.0)]);
        let mut re: Vec<f64> = r.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        assert!((re[0] - 1.0).abs() < 1e-12 && (re[1] - 2.0).abs() < 1e-12);
    }
}
