//! Independent computation paths for cross-checking the filter engine.
//!
//! The Fourier path assembles windowed block-Toeplitz operators from the
//! coefficients of three integrands and solves a Hermitian system. The
//! projection oracle poses the estimate as a finite least-squares problem
//! over a window of observed increments, using covariances only.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::factorization::CausalMatrixSeries;
use crate::filter::{CVector, FunctionalCoefficients};
use crate::grid::{CMatrix, C64};
use crate::increment::{expand_increment_operator, IncrementSpec};
use crate::spectral::{observed_density, MatrixDensityGrid, TransferGrid};

/// Condition number above which the `P` window is rejected.
pub const MAX_CONDITION: f64 = 1e12;
/// Relative ridge added to Gram matrices.
pub const GRAM_RIDGE: f64 = 1e-12;
/// Extra window length beyond twice the support of `a_mu`.
pub const WINDOW_MARGIN: usize = 64;

fn zero(dim: usize) -> CMatrix {
    CMatrix::zeros(dim, dim)
}

/// Two-sided coefficient table `c(k)`, `|k| <= k_max`.
#[derive(Debug, Clone)]
pub struct CoefficientTable {
    k_max: usize,
    values: Vec<CMatrix>,
}

impl CoefficientTable {
    fn from_grid(values: &[CMatrix], density: &MatrixDensityGrid, k_max: usize) -> Self {
        let values = density.grid.matrix_coefficients(values, -(k_max as i64), 2 * k_max + 1);
        CoefficientTable { k_max, values }
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn at(&self, k: i64) -> Result<&CMatrix> {
        if k.unsigned_abs() as usize > self.k_max {
            return Err(Error::OutOfRange(format!("coefficient lag {k} beyond K = {}", self.k_max)));
        }
        Ok(&self.values[(k + self.k_max as i64) as usize])
    }
}

/// Generators `S(k)`, `P(k)`, `Q(k)` together with the grid data needed to
/// evaluate the characteristic.
#[derive(Debug, Clone)]
pub struct FourierOperatorSet {
    pub s: CoefficientTable,
    pub p: CoefficientTable,
    pub q: CoefficientTable,
    pub n_gamma: usize,
    e_gamma: Vec<i64>,
    transfer: TransferGrid,
    g: MatrixDensityGrid,
    p_inv: Vec<CMatrix>,
}

/// Quadrature of `S = (|beta|^2/|chi|^2) p^{-1} g`, `P = (|beta|^2/|chi|^2) p^{-1}`
/// and `Q = (f p^{-1} g)^T` for `|k| <= k_max`.
pub fn fourier_coefficients(
    f: &MatrixDensityGrid,
    g: &MatrixDensityGrid,
    spec: &IncrementSpec,
    k_max: usize,
) -> Result<FourierOperatorSet> {
    let transfer = TransferGrid::new(spec, &f.grid)?;
    let p = observed_density(f, g, &transfer)?;
    let p_inv: Vec<CMatrix> = p
        .values
        .iter()
        .enumerate()
        .map(|(j, m)| {
            m.clone().try_inverse().ok_or(Error::SingularDensity { node: j, lambda: f.grid.node(j) })
        })
        .collect::<Result<_>>()?;
    let n = f.grid.size();
    let mut s_int = Vec::with_capacity(n);
    let mut p_int = Vec::with_capacity(n);
    let mut q_int = Vec::with_capacity(n);
    for j in 0..n {
        let w = transfer.inverse_weight(j);
        s_int.push((&p_inv[j] * &g.values[j]).scale(w));
        p_int.push(p_inv[j].scale(w));
        q_int.push((&f.values[j] * &p_inv[j] * &g.values[j]).transpose());
    }
    let e_gamma = expand_increment_operator(spec)?.coeffs;
    Ok(FourierOperatorSet {
        s: CoefficientTable::from_grid(&s_int, f, k_max),
        p: CoefficientTable::from_grid(&p_int, f, k_max),
        q: CoefficientTable::from_grid(&q_int, f, k_max),
        n_gamma: e_gamma.len() - 1,
        e_gamma,
        transfer,
        g: g.clone(),
        p_inv,
    })
}

/// Coefficient range needed for a functional of support `big_n` and window `w`.
pub fn required_k(big_n: usize, n_gamma: usize, window: usize) -> usize {
    window + big_n + n_gamma + 2
}

pub fn default_window(fc: &FunctionalCoefficients) -> usize {
    2 * fc.a_mu().len() + WINDOW_MARGIN
}

/// Solution of the windowed Fourier system.
#[derive(Debug, Clone)]
pub struct FourierSolution {
    pub delta: f64,
    pub h: Vec<CVector>,
    /// Blocks of `x = P^{-1} S a_mu`.
    pub x: Vec<CVector>,
    pub window: usize,
    pub condition: f64,
}

fn block_matrix(rows: usize, cols: usize, dim: usize, block: impl Fn(usize, usize) -> Result<CMatrix>) -> Result<CMatrix> {
    let mut m = CMatrix::zeros(rows * dim, cols * dim);
    for l in 0..rows {
        for k in 0..cols {
            m.view_mut((l * dim, k * dim), (dim, dim)).copy_from(&block(l, k)?);
        }
    }
    Ok(m)
}

fn stack(vs: &[DVector<f64>]) -> CVector {
    CVector::from_iterator(vs.len() * vs[0].len(), vs.iter().flat_map(|v| v.iter().map(|&x| C64::new(x, 0.0))))
}

impl FourierOperatorSet {
    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    pub fn e_gamma(&self) -> &[i64] {
        &self.e_gamma
    }

    /// `P` window with blocks `P(l - k)`, `0 <= l, k < window`.
    pub fn p_window(&self, window: usize) -> Result<CMatrix> {
        block_matrix(window, window, self.dim(), |l, k| self.p.at(l as i64 - k as i64).cloned())
    }

    /// Solves the windowed system; `window` defaults to `2 len(a_mu) + 64`.
    pub fn solve(&self, fc: &FunctionalCoefficients, window: Option<usize>) -> Result<FourierSolution> {
        let dim = self.dim();
        let w = window.unwrap_or_else(|| default_window(fc));
        let need = required_k(fc.support(), self.n_gamma, w);
        if self.s.k_max() < need {
            return Err(Error::OutOfRange(format!("window {w} needs coefficients up to {need}")));
        }
        let n = self.n_gamma as i64;
        let amu = fc.a_mu();
        let s_mat = block_matrix(w, amu.len(), dim, |l, k| self.s.at(l as i64 + 1 + k as i64 - n).cloned())?;
        let p_mat = self.p_window(w)?;
        let q_mat = block_matrix(fc.a.len(), fc.a.len(), dim, |l, k| self.q.at(l as i64 - k as i64).cloned())?;

        let eig = p_mat.clone().symmetric_eigenvalues();
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| (lo.min(e), hi.max(e.abs())));
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if condition > MAX_CONDITION {
            return Err(Error::IllConditioned { condition });
        }
        let sa = &s_mat * stack(amu);
        let x = p_mat.cholesky().ok_or(Error::IllConditioned { condition })?.solve(&sa);
        let av = stack(&fc.a);
        let delta = sa.dotc(&x).re + av.dotc(&(&q_mat * &av)).re;
        let blocks: Vec<CVector> = (0..w).map(|k| x.rows(k * dim, dim).into_owned()).collect();
        let h = self.characteristic(fc, &blocks);
        Ok(FourierSolution { delta, h, x: blocks, window: w, condition })
    }

    /// `h^T = [conj(chi) A^T g - C^T] p^{-1} conj(beta) / conj(chi)` with
    /// `C(e^{i lambda}) = sum_k x_k e^{i lambda (k+1)}`.
    fn characteristic(&self, fc: &FunctionalCoefficients, x: &[CVector]) -> Vec<CVector> {
        let grid = &self.g.grid;
        let a_tr = fc.transfer(grid);
        let dim = self.dim();
        (0..grid.size())
            .map(|j| {
                let lam = grid.node(j);
                let mut c = CVector::zeros(dim);
                for (k, xk) in x.iter().enumerate() {
                    c += xk * C64::from_polar(1.0, lam * (k + 1) as f64);
                }
                let chi_c = self.transfer.chi[j].conj();
                let row = (a_tr[j].transpose() * &self.g.values[j]) * chi_c - c.transpose();
                (row * &self.p_inv[j]).transpose() * (self.transfer.beta[j].conj() / chi_c)
            })
            .collect()
    }
}

/// Fourier-path mean-square error `<S a_mu, P^{-1} S a_mu> + <Q a, a>`.
pub fn delta_fourier(set: &FourierOperatorSet, fc: &FunctionalCoefficients) -> Result<f64> {
    set.solve(fc, None).map(|s| s.delta)
}

/// Fourier-path spectral characteristic.
pub fn h_fourier(set: &FourierOperatorSet, fc: &FunctionalCoefficients) -> Result<Vec<CVector>> {
    set.solve(fc, None).map(|s| s.h)
}

/// Builds the coefficient set with enough lags for `a` and solves.
pub fn fourier_solution(
    f: &MatrixDensityGrid,
    g: &MatrixDensityGrid,
    spec: &IncrementSpec,
    a: Vec<DVector<f64>>,
    window: Option<usize>,
) -> Result<FourierSolution> {
    let e = expand_increment_operator(spec)?;
    let fc = FunctionalCoefficients::new(a, &e.coeffs)?;
    let w = window.unwrap_or_else(|| default_window(&fc));
    let set = fourier_coefficients(f, g, spec, required_k(fc.support(), e.degree(), w))?;
    set.solve(&fc, Some(w))
}

/// Finite projection: `Var(A eta) - r Gamma^{-1} r^*` over `w_obs` observed
/// increments `x(0), x(-1), ..`. `Gamma(i, j) = R_x(j - i)` and
/// `r(m) = sum_k sum_i e(i) a(k)^T R_eta(m + i - k)`.
pub fn projection_oracle(
    f: &MatrixDensityGrid,
    g: &MatrixDensityGrid,
    spec: &IncrementSpec,
    a: &[DVector<f64>],
    w_obs: usize,
) -> Result<f64> {
    let transfer = TransferGrid::new(spec, &f.grid)?;
    let e = expand_increment_operator(spec)?.coeffs;
    let n = e.len() - 1;
    let big_n = a.len() - 1;
    let dim = f.dim();
    if a.iter().any(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch("functional and density dimensions differ".into()));
    }
    let k_max = w_obs + big_n + n + 2;
    let p = observed_density(f, g, &transfer)?;
    let x_vals: Vec<CMatrix> = p.values.iter().enumerate().map(|(j, v)| v.scale(transfer.weight(j))).collect();
    let rx = CoefficientTable::from_grid(&x_vals, f, k_max);
    let re = CoefficientTable::from_grid(&g.values, g, k_max);
    let ac: Vec<CVector> = a.iter().map(|v| v.map(|x| C64::new(x, 0.0))).collect();

    let mut var = 0.0;
    for (k, ak) in ac.iter().enumerate() {
        for (l, al) in ac.iter().enumerate() {
            var += (ak.transpose() * re.at(l as i64 - k as i64)? * al.map(|z| z.conj()))[(0, 0)].re;
        }
    }
    if w_obs == 0 {
        return Ok(var);
    }
    let mut gram = block_matrix(w_obs, w_obs, dim, |i, j| rx.at(j as i64 - i as i64).cloned())?;
    let size = w_obs * dim;
    let trace: f64 = (0..size).map(|i| gram[(i, i)].re).sum();
    let ridge = GRAM_RIDGE * trace / size as f64;
    for i in 0..size {
        gram[(i, i)] += C64::new(ridge, 0.0);
    }
    let mut r = CVector::zeros(size);
    for m in 0..w_obs {
        let mut acc = CVector::zeros(dim).transpose();
        for (k, ak) in ac.iter().enumerate() {
            for (i, &ei) in e.iter().enumerate() {
                acc += ak.transpose() * re.at(m as i64 + i as i64 - k as i64)? * C64::new(ei as f64, 0.0);
            }
        }
        r.rows_mut(m * dim, dim).copy_from(&acc.transpose());
    }
    let chol = gram.cholesky().ok_or(Error::NotPositiveDefinite {
        node: 0,
        lambda: f64::NAN,
        min_eig: f64::NAN,
    })?;
    let rc = r.map(|z| z.conj());
    let proj = r.transpose() * chol.solve(&rc);
    Ok(var - proj[(0, 0)].re)
}

/// Residuals of the windowed factor identities at one window length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowCheck {
    pub window: usize,
    /// Max-abs entry of the leading block of `P_W - Psi_W^T conj(Psi_W)`.
    pub psi_residual: f64,
    /// Max-abs entry of the leading block of `P_W conj(Theta_W) Theta_W^T - I`.
    pub identity_residual: f64,
}

/// Rows and columns (in scalar blocks) of the leading block that is compared.
pub const LEADING_BLOCK: usize = 8;

fn lower_toeplitz(series: &CausalMatrixSeries, window: usize) -> CMatrix {
    let dim = series.rows();
    let mut m = CMatrix::zeros(window * dim, window * dim);
    for l in 0..window {
        for k in 0..=l {
            let c = series.at(l - k).cloned().unwrap_or_else(|| zero(dim));
            m.view_mut((l * dim, k * dim), (dim, dim)).copy_from(&c);
        }
    }
    m
}

/// Checks that the `P` window (with blocks `P(l-k)^T`) factors through the
/// truncated inverse factor and inverts the truncated `conj(Theta) Theta^T`,
/// comparing the leading `8 T x 8 T` block.
pub fn windowed_factor_check(
    set: &FourierOperatorSet,
    theta: &CausalMatrixSeries,
    psi: &CausalMatrixSeries,
    windows: &[usize],
) -> Result<Vec<WindowCheck>> {
    let dim = set.dim();
    windows
        .iter()
        .map(|&w| {
            let p = block_matrix(w, w, dim, |l, k| set.p.at(l as i64 - k as i64).map(|m| m.transpose()))?;
            let th = lower_toeplitz(theta, w);
            let ps = lower_toeplitz(psi, w);
            let lead = LEADING_BLOCK.min(w) * dim;
            let r1 = &p - ps.transpose() * ps.map(|z| z.conj());
            let r2 = &p * th.map(|z| z.conj()) * th.transpose() - CMatrix::identity(w * dim, w * dim);
            let max_abs = |m: &CMatrix| m.view((0, 0), (lead, lead)).iter().map(|z| z.norm()).fold(0.0, f64::max);
            Ok(WindowCheck { window: w, psi_residual: max_abs(&r1), identity_residual: max_abs(&r2) })
        })
        .collect()
}
