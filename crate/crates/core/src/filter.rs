//! Optimal filter from canonical factorizations.
//!
//! The estimate of `A xi = sum_k a(k)^T xi(-k)` from observations of
//! `xi + eta` at `m <= 0` has spectral characteristic
//!
//! ```text
//! h(lambda) = chi/beta * Psi^T(e^{-i lambda}) * sum_m (psi_bar C)_m e^{-i lambda m}
//! ```
//!
//! and error `Delta = ||Phi~ a||^2 - ||psi_bar (C- + C+)||^2`, where `Theta`
//! factors the observed-increment density, `Psi = Theta^{-1}` and `Phi`
//! factors the noise density `g`.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::factorization::{
    covariances_from_factor, factorize_or_zero, invert_factor, weighted_observed_factor, CausalMatrixSeries,
    CovarianceSeries, FactorDiagnostics, Factorization,
};
use crate::grid::{CMatrix, FrequencyGrid, C64};
use crate::increment::{expand_increment_operator, lift_functional, IncrementSpec};
use crate::spectral::{observed_density, MatrixDensityGrid, TransferGrid};

/// Relative slack under which a negative error is clamped to zero.
pub const NEGATIVE_CLAMP: f64 = 1e-9;

pub type CVector = DVector<C64>;

fn zero_vec(dim: usize) -> CVector {
    CVector::zeros(dim)
}

fn to_complex(v: &DVector<f64>) -> CVector {
    v.map(|x| C64::new(x, 0.0))
}

/// Weights `a(0..=N)` of the target functional and the derived sequences.
#[derive(Debug, Clone)]
pub struct FunctionalCoefficients {
    pub a: Vec<DVector<f64>>,
    n_gamma: usize,
    a_minus: Vec<DVector<f64>>,
}

impl FunctionalCoefficients {
    /// Builds `a_minus(m) = sum_{l=max(m,0)}^{min(m+n,N)} e(l-m) a(l)` for
    /// `-n <= m <= N`.
    pub fn new(a: Vec<DVector<f64>>, e_gamma: &[i64]) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::InvalidSpec("functional needs at least one coefficient".into()));
        }
        let dim = a[0].len();
        if a.iter().any(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch("functional coefficients differ in length".into()));
        }
        if a.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidSpec("functional coefficients must be finite".into()));
        }
        let n = e_gamma.len() - 1;
        let big_n = a.len() as i64 - 1;
        let a_minus = (-(n as i64)..=big_n)
            .map(|m| {
                let mut acc = DVector::zeros(dim);
                for l in m.max(0)..=(m + n as i64).min(big_n) {
                    acc.axpy(e_gamma[(l - m) as usize] as f64, &a[l as usize], 1.0);
                }
                acc
            })
            .collect();
        Ok(FunctionalCoefficients { a, n_gamma: n, a_minus })
    }

    pub fn dim(&self) -> usize {
        self.a[0].len()
    }

    /// Largest index `N` of the support.
    pub fn support(&self) -> usize {
        self.a.len() - 1
    }

    pub fn n_gamma(&self) -> usize {
        self.n_gamma
    }

    /// `a_minus(m)` for `m >= -n`; zero beyond `N`.
    pub fn a_minus(&self, m: i64) -> DVector<f64> {
        let idx = m + self.n_gamma as i64;
        if idx < 0 {
            panic!("a_minus index {m} below -n(gamma)");
        }
        self.a_minus.get(idx as usize).cloned().unwrap_or_else(|| DVector::zeros(self.dim()))
    }

    /// `b_minus(k)`: zero at 0, `a_minus(-k)` for `1 <= k <= n`, zero beyond.
    pub fn b_minus(&self, k: usize) -> DVector<f64> {
        if k == 0 || k > self.n_gamma {
            DVector::zeros(self.dim())
        } else {
            self.a_minus(-(k as i64))
        }
    }

    /// `a_mu(k) = a_minus(k - n)`, `k = 0..=N+n`.
    pub fn a_mu(&self) -> &[DVector<f64>] {
        &self.a_minus
    }

    /// `A(e^{-i lambda}) = sum_k a(k) e^{-i lambda k}` on the grid.
    pub fn transfer(&self, grid: &FrequencyGrid) -> Vec<CVector> {
        grid.nodes()
            .iter()
            .map(|&l| {
                let mut acc = zero_vec(self.dim());
                for (k, v) in self.a.iter().enumerate() {
                    acc += to_complex(v) * C64::from_polar(1.0, -l * k as f64);
                }
                acc
            })
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.a.iter().all(|v| v.iter().all(|&x| x == 0.0))
    }

    pub fn norm_squared(&self) -> f64 {
        self.a.iter().map(|v| v.norm_squared()).sum()
    }
}

/// Standalone form of the `a_minus` table for `-n <= m <= N`.
pub fn derive_a_minus(a: &[DVector<f64>], e_gamma: &[i64]) -> Result<Vec<(i64, DVector<f64>)>> {
    let fc = FunctionalCoefficients::new(a.to_vec(), e_gamma)?;
    let n = fc.n_gamma() as i64;
    Ok((-n..=fc.support() as i64).map(|m| (m, fc.a_minus(m))).collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct FilterDiagnostics {
    pub truncation: usize,
    pub theta: FactorDiagnostics,
    pub phi: FactorDiagnostics,
    /// Crude bound on the error of `delta` caused by truncation.
    pub truncation_error_estimate: f64,
    pub warnings: Vec<String>,
}

/// Spectral characteristic and mean-square error of the optimal estimate.
#[derive(Debug, Clone)]
pub struct FilterSolution {
    pub h: Vec<CVector>,
    pub delta: f64,
    /// `(||Phi~ a||^2, ||psi_bar C||^2)`.
    pub terms: (f64, f64),
    pub diagnostics: FilterDiagnostics,
}

/// Factorizations shared by every functional filtered against one `(f, g)`.
#[derive(Debug, Clone)]
pub struct FilterContext {
    pub spec: IncrementSpec,
    pub e_gamma: Vec<i64>,
    pub grid: FrequencyGrid,
    pub transfer: TransferGrid,
    pub f: MatrixDensityGrid,
    pub g: MatrixDensityGrid,
    pub theta: Factorization,
    pub phi: Factorization,
    pub psi: CausalMatrixSeries,
    /// Exact grid values of `Psi(e^{-i lambda}) = Theta^{-1}`.
    pub psi_grid: Vec<CMatrix>,
    pub cov: CovarianceSeries,
    pub truncation: usize,
}

impl FilterContext {
    pub fn new(
        spec: &IncrementSpec,
        f: &MatrixDensityGrid,
        g: &MatrixDensityGrid,
        truncation: usize,
    ) -> Result<Self> {
        spec.validate()?;
        let grid = f.grid.clone();
        if f.dim() != spec.period {
            return Err(Error::DimensionMismatch(format!(
                "density dimension {} differs from period T = {}",
                f.dim(),
                spec.period
            )));
        }
        let transfer = TransferGrid::new(spec, &grid)?;
        let p = observed_density(f, g, &transfer)?;
        let theta = weighted_observed_factor(&p, &transfer, truncation)?;
        let phi = factorize_or_zero(g, truncation)?;
        let psi = invert_factor(&theta.series)?;
        let psi_grid = theta.inverse_grid_values()?;
        let cov = covariances_from_factor(&phi.series);
        Ok(FilterContext {
            spec: spec.clone(),
            e_gamma: expand_increment_operator(spec)?.coeffs,
            grid,
            transfer,
            f: f.clone(),
            g: g.clone(),
            theta,
            phi,
            psi,
            psi_grid,
            cov,
            truncation,
        })
    }

    pub fn dim(&self) -> usize {
        self.spec.period
    }

    pub fn functional(&self, a: Vec<DVector<f64>>) -> Result<FunctionalCoefficients> {
        let fc = FunctionalCoefficients::new(a, &self.e_gamma)?;
        if fc.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "functional of dimension {} for period T = {}",
                fc.dim(),
                self.dim()
            )));
        }
        Ok(fc)
    }

    fn phi_t(&self, k: usize) -> Option<CMatrix> {
        self.phi.series.at(k).map(|m| m.transpose())
    }

    /// `(Phi~ x)_k = sum_{j <= k} phi^T(k - j) x(j)` for `k = 0..len`.
    fn phi_tilde(&self, x: &[CVector], len: usize) -> Vec<CVector> {
        let l = self.truncation;
        (0..len)
            .map(|k| {
                let mut acc = zero_vec(self.dim());
                for (j, xj) in x.iter().enumerate().take(k + 1) {
                    if k - j < l {
                        acc += self.phi_t(k - j).unwrap() * xj;
                    }
                }
                acc
            })
            .collect()
    }

    /// `||Phi~ a||^2`.
    pub fn norm_phi_a(&self, fc: &FunctionalCoefficients) -> f64 {
        let a: Vec<CVector> = fc.a.iter().map(to_complex).collect();
        self.phi_tilde(&a, a.len() + self.truncation).iter().map(|v| v.norm_squared()).sum()
    }

    /// `c-(m) = sum_k conj(g(m-k)) a_minus(k)` for `m = 0..len`, by the
    /// two-stage composition `(Phi~^* Phi~ a_minus)_m`.
    pub fn c_minus(&self, fc: &FunctionalCoefficients, len: usize) -> Vec<CVector> {
        let x: Vec<CVector> = (0..=fc.support() as i64).map(|k| to_complex(&fc.a_minus(k))).collect();
        let l = self.truncation;
        let inner = self.phi_tilde(&x, len + l);
        (0..len)
            .map(|m| {
                let mut acc = zero_vec(self.dim());
                for q in 0..l {
                    let c = self.phi.series.coeffs[q].map(|z| z.conj());
                    acc += c * &inner[q + m];
                }
                acc
            })
            .collect()
    }

    /// `c+(m) = sum_k conj(g(m+k)) b_minus(k)` via `(Phi~^* Phi~+ b_minus)_m`
    /// with `(Phi~+ x)_l = sum_k phi^T(l+k) x(k)`.
    pub fn c_plus(&self, fc: &FunctionalCoefficients, len: usize) -> Vec<CVector> {
        let n = fc.n_gamma();
        let l = self.truncation;
        let b: Vec<CVector> = (0..=n).map(|k| to_complex(&fc.b_minus(k))).collect();
        let inner: Vec<CVector> = (0..len + l)
            .map(|q| {
                let mut acc = zero_vec(self.dim());
                for (k, bk) in b.iter().enumerate() {
                    if let Some(p) = self.phi_t(q + k) {
                        acc += p * bk;
                    }
                }
                acc
            })
            .collect();
        (0..len)
            .map(|m| {
                let mut acc = zero_vec(self.dim());
                for q in 0..l {
                    let c = self.phi.series.coeffs[q].map(|z| z.conj());
                    acc += c * &inner[q + m];
                }
                acc
            })
            .collect()
    }

    /// Direct-sum forms of `c-` and `c+` from the covariance sequence.
    pub fn c_direct(&self, fc: &FunctionalCoefficients, len: usize) -> (Vec<CVector>, Vec<CVector>) {
        let cm = (0..len as i64)
            .map(|m| {
                let mut acc = zero_vec(self.dim());
                for k in 0..=fc.support() as i64 {
                    acc += self.cov.conj_at(m - k) * to_complex(&fc.a_minus(k));
                }
                acc
            })
            .collect();
        let cp = (0..len as i64)
            .map(|m| {
                let mut acc = zero_vec(self.dim());
                for k in 1..=fc.n_gamma() {
                    acc += self.cov.conj_at(m + k as i64) * to_complex(&fc.b_minus(k));
                }
                acc
            })
            .collect();
        (cm, cp)
    }

    /// `(psi_bar C)_m = sum_k conj(psi(k)) C(k+m)` for `m = 0..L`.
    pub fn psi_bar_apply(&self, c: &[CVector]) -> Vec<CVector> {
        let l = self.truncation;
        (0..l)
            .map(|m| {
                let mut acc = zero_vec(self.dim());
                for k in 0..l {
                    if let Some(ck) = c.get(k + m) {
                        acc += self.psi.coeffs[k].map(|z| z.conj()) * ck;
                    }
                }
                acc
            })
            .collect()
    }

    /// `h = chi/beta * Psi^T * sum_m v_m e^{-i lambda m}` on the grid.
    pub fn characteristic_from_series(&self, v: &[CVector]) -> Vec<CVector> {
        let dim = self.dim();
        let mut series = vec![zero_vec(dim); self.grid.size()];
        let mut buf = vec![C64::new(0.0, 0.0); v.len()];
        for p in 0..dim {
            for (b, x) in buf.iter_mut().zip(v) {
                *b = x[p];
            }
            for (s, y) in series.iter_mut().zip(self.grid.evaluate(&buf, 0)) {
                s[p] = y;
            }
        }
        series
            .iter()
            .enumerate()
            .map(|(j, s)| self.psi_grid[j].transpose() * s * self.transfer.ratio[j])
            .collect()
    }

    /// Full factorization pipeline for a functional.
    pub fn solve(&self, fc: &FunctionalCoefficients) -> Result<FilterSolution> {
        let l = self.truncation;
        let clen = 2 * l;
        let cm = self.c_minus(fc, clen);
        let cp = self.c_plus(fc, clen);
        let c: Vec<CVector> = cm.iter().zip(&cp).map(|(a, b)| a + b).collect();
        let v = self.psi_bar_apply(&c);
        let norm_a = self.norm_phi_a(fc);
        let norm_c: f64 = v.iter().map(|x| x.norm_squared()).sum();
        let h = self.characteristic_from_series(&v);
        self.finish(fc, h, norm_a, norm_c)
    }

    fn finish(&self, fc: &FunctionalCoefficients, h: Vec<CVector>, norm_a: f64, norm_c: f64) -> Result<FilterSolution> {
        let mut warnings: Vec<String> = Vec::new();
        warnings.extend(self.theta.diagnostics.warnings.iter().map(|w| format!("theta: {w}")));
        warnings.extend(self.phi.diagnostics.warnings.iter().map(|w| format!("phi: {w}")));
        let mut delta = norm_a - norm_c;
        if delta < 0.0 {
            if delta >= -NEGATIVE_CLAMP * norm_a {
                warnings.push(format!("mean-square error {delta:.3e} clamped to zero"));
                delta = 0.0;
            } else {
                return Err(Error::NegativeError { value: delta });
            }
        }
        let tail_phi = self.phi.series.energy_from(self.truncation - self.truncation / 8);
        let estimate = tail_phi * fc.norm_squared() + self.theta.diagnostics.tail_energy * norm_c;
        Ok(FilterSolution {
            h,
            delta,
            terms: (norm_a, norm_c),
            diagnostics: FilterDiagnostics {
                truncation: self.truncation,
                theta: self.theta.diagnostics.clone(),
                phi: self.phi.diagnostics.clone(),
                truncation_error_estimate: estimate,
                warnings,
            },
        })
    }

    /// Filter for a finitely supported functional `a(0..=N)`.
    pub fn filter_finite(&self, a: Vec<DVector<f64>>) -> Result<FilterSolution> {
        let fc = self.functional(a)?;
        self.solve(&fc)
    }

    /// Estimate of the single coordinate `xi_p(-N)`, zero-based `p`.
    ///
    /// For `N >= n(gamma)` the reduced formulas apply: `b_minus = 0` and
    /// `Delta = conj(g(0))_pp - ||psi_bar G- a_minus||^2` with `G-` applied
    /// through the covariance sequence.
    pub fn filter_single_value(&self, big_n: usize, p: usize) -> Result<FilterSolution> {
        let dim = self.dim();
        if p >= dim {
            return Err(Error::OutOfRange(format!("coordinate p = {p} outside 0..{dim}")));
        }
        let mut a = vec![DVector::zeros(dim); big_n + 1];
        a[big_n][p] = 1.0;
        let fc = self.functional(a)?;
        if big_n < fc.n_gamma() {
            return self.solve(&fc);
        }
        let (cm, _) = self.c_direct(&fc, 2 * self.truncation);
        let v = self.psi_bar_apply(&cm);
        let norm_c: f64 = v.iter().map(|x| x.norm_squared()).sum();
        let norm_a = self.cov.conj_at(0)[(p, p)].re;
        let h = self.characteristic_from_series(&v);
        self.finish(&fc, h, norm_a, norm_c)
    }

    /// Grid-exact evaluation of the same estimate through the causal
    /// projection `V = [conj(Psi) g^T A conj(chi)]_+`:
    /// `Delta = <A^T g conj(A)> - <|V|^2>`, `h = chi/beta Psi^T V`. No coefficient truncation is
    /// involved, so it also serves non-smooth densities.
    pub fn solve_on_grid(&self, fc: &FunctionalCoefficients) -> Result<GridFilterSolution> {
        filter_on_grid(&self.transfer, &self.psi_grid, &self.g, fc)
    }
}

/// Output of the grid-exact pipeline.
#[derive(Debug, Clone)]
pub struct GridFilterSolution {
    pub h: Vec<CVector>,
    /// The causal vector `V(e^{-i lambda})`, equal to `sum_m (psi_bar C)_m e^{-i lambda m}`.
    pub v: Vec<CVector>,
    pub delta: f64,
    /// `A(e^{-i lambda})` on the grid.
    pub a_transfer: Vec<CVector>,
}

/// Grid-exact filter given the inverse factor values `psi_grid`.
pub fn filter_on_grid(
    transfer: &TransferGrid,
    psi_grid: &[CMatrix],
    g: &MatrixDensityGrid,
    fc: &FunctionalCoefficients,
) -> Result<GridFilterSolution> {
    let grid = &g.grid;
    let a_tr = fc.transfer(grid);
    let mut var = 0.0;
    let mut inner = Vec::with_capacity(grid.size());
    for j in 0..grid.size() {
        let ga = g.values[j].transpose() * &a_tr[j];
        var += a_tr[j].dot(&ga.map(|z| z.conj())).re;
        let w = psi_grid[j].map(|z| z.conj()) * ga * transfer.chi[j].conj();
        inner.push(w.iter().copied().collect::<Vec<_>>());
    }
    let v: Vec<CVector> =
        grid.vector_causal_part(&inner).into_iter().map(CVector::from_vec).collect();
    let vv: f64 = v.iter().map(|x| x.norm_squared()).sum();
    let n = grid.size() as f64;
    let mut delta = var / n - vv / n;
    if delta < 0.0 && delta >= -NEGATIVE_CLAMP * (var / n) {
        delta = 0.0;
    } else if delta < 0.0 {
        return Err(Error::NegativeError { value: delta });
    }
    let h = v
        .iter()
        .enumerate()
        .map(|(j, x)| psi_grid[j].transpose() * x * transfer.ratio[j])
        .collect();
    Ok(GridFilterSolution { h, v, delta, a_transfer: a_tr })
}

/// Periodic wrapper: lifts scalar weights `a(0..=M)` to period-`T` vectors
/// and runs the vector pipeline. `spec.period` must equal the density
/// dimension.
pub fn filter_periodic(ctx: &FilterContext, scalar_weights: &[f64]) -> Result<FilterSolution> {
    let a = lift_functional(scalar_weights, ctx.dim())?;
    ctx.filter_finite(a)
}

/// Single scalar value `xi(-M)` of a periodically stationary sequence:
/// `N = M / T`, zero-based `p = M - N T`.
pub fn filter_periodic_single(ctx: &FilterContext, m: usize) -> Result<FilterSolution> {
    let t = ctx.dim();
    ctx.filter_single_value(m / t, m % t)
}

/// Mean-square error of an arbitrary characteristic `h` under `(f, g)`:
/// `<h^T f conj(h)> + <(A - beta h)^T g conj(A - beta h)>`.
pub fn error_of_characteristic(
    h: &[CVector],
    a_transfer: &[CVector],
    transfer: &TransferGrid,
    f: &MatrixDensityGrid,
    g: &MatrixDensityGrid,
) -> f64 {
    let n = f.grid.size();
    let mut acc = 0.0;
    for j in 0..n {
        let hc = h[j].map(|z| z.conj());
        acc += (h[j].transpose() * &f.values[j] * &hc)[(0, 0)].re;
        let r = &a_transfer[j] - &h[j] * transfer.beta[j];
        let rc = r.map(|z| z.conj());
        acc += (r.transpose() * &g.values[j] * rc)[(0, 0)].re;
    }
    acc / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::DensityLabel;

    fn scalar_ctx(f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64, spec: IncrementSpec) -> FilterContext {
        let grid = FrequencyGrid::new(1024).unwrap();
        let fd = MatrixDensityGrid::from_scalar_fn(&grid, DensityLabel::F, f);
        let gd = MatrixDensityGrid::from_scalar_fn(&grid, DensityLabel::G, g);
        FilterContext::new(&spec, &fd, &gd, 128).unwrap()
    }

    fn sv(xs: &[f64]) -> Vec<DVector<f64>> {
        xs.iter().map(|&x| DVector::from_element(1, x)).collect()
    }

    #[test]
    fn a_minus_first_difference() {
        let t = derive_a_minus(&sv(&[2.0]), &[1, -1]).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!((t[0].0, t[0].1[0]), (-1, -2.0));
        assert_eq!((t[1].0, t[1].1[0]), (0, 2.0));
    }

    #[test]
    fn a_minus_single_value_pattern() {
        let n = 4usize;
        let mut a = vec![DVector::zeros(2); n + 1];
        a[n][1] = 1.0;
        let fc = FunctionalCoefficients::new(a, &[1, -1]).unwrap();
        for m in -1..=n as i64 {
            let v = fc.a_minus(m);
            let want = match n as i64 - m {
                0 => 1.0,
                1 => -1.0,
                _ => 0.0,
            };
            assert_eq!(v[1], want);
            assert_eq!(v[0], 0.0);
        }
        assert_eq!(fc.b_minus(0)[1], 0.0);
    }

    #[test]
    fn two_stage_matches_direct() {
        let spec = IncrementSpec::new(vec![1, 1], vec![1, 2], vec![1, 1], 1).unwrap();
        let ctx = scalar_ctx(
            |l| (1.3 + l.cos()) * 0.2,
            |l| {
                let z = C64::from_polar(1.0, -l);
                (C64::new(1.0, 0.0) + z * 0.5 - z * z * 0.2).norm_sqr()
            },
            spec,
        );
        let fc = ctx.functional(sv(&[1.0, -0.4, 0.3, 0.25])).unwrap();
        let cm = ctx.c_minus(&fc, 40);
        let cp = ctx.c_plus(&fc, 40);
        let (dm, dp) = ctx.c_direct(&fc, 40);
        for m in 0..40 {
            assert!((&cm[m] - &dm[m]).norm() < 1e-12, "c- at {m}");
            assert!((&cp[m] - &dp[m]).norm() < 1e-12, "c+ at {m}");
        }
    }

    #[test]
    fn white_noise_c_terms() {
        let ctx = scalar_ctx(|_| 1.0, |_| 1.0, IncrementSpec::simple(1, 1, 1));
        let fc = ctx.functional(sv(&[1.0, 2.0])).unwrap();
        let cm = ctx.c_minus(&fc, 5);
        let cp = ctx.c_plus(&fc, 5);
        // a_minus = (a(0) - a(1), a(1)) at m = 0, 1.
        assert!((cm[0][0].re + 1.0).abs() < 1e-13 && (cm[1][0].re - 2.0).abs() < 1e-13);
        assert!(cm[2..].iter().all(|v| v.norm() < 1e-13));
        assert!(cp.iter().all(|v| v.norm() < 1e-13));
    }

    #[test]
    fn zero_noise_and_zero_functional() {
        let grid = FrequencyGrid::new(256).unwrap();
        let f = MatrixDensityGrid::from_scalar_fn(&grid, DensityLabel::F, |l| 1.0 + 0.5 * l.cos());
        let g = MatrixDensityGrid::zeros(&grid, DensityLabel::G, 1);
        let ctx = FilterContext::new(&IncrementSpec::simple(1, 1, 1), &f, &g, 64).unwrap();
        let s = ctx.filter_finite(sv(&[1.0, 0.5])).unwrap();
        assert_eq!(s.delta, 0.0);
        assert!(s.h.iter().all(|v| v.norm() == 0.0));
        let ctx = scalar_ctx(|_| 1.0, |_| 1.0, IncrementSpec::simple(1, 1, 1));
        let s = ctx.filter_finite(sv(&[0.0, 0.0])).unwrap();
        assert_eq!(s.delta, 0.0);
    }

    #[test]
    fn series_and_grid_paths_agree_on_smooth_fixture() {
        let spec = IncrementSpec::simple(1, 1, 1);
        let grid = FrequencyGrid::new(1024).unwrap();
        let tr = TransferGrid::new(&spec, &grid).unwrap();
        let f = MatrixDensityGrid::from_scalar_fn(&grid, DensityLabel::F, |_| 1.0)
            .map(DensityLabel::F, |j, v| v.scale((1.2 + 0.4 * grid.node(j).cos()) * tr.inverse_weight(j)));
        let g = MatrixDensityGrid::from_scalar_fn(&grid, DensityLabel::G, |l| 1.1 + 0.6 * l.cos());
        let ctx = FilterContext::new(&spec, &f, &g, 128).unwrap();
        let fc = ctx.functional(sv(&[1.0, 0.3, -0.2])).unwrap();
        let s = ctx.solve(&fc).unwrap();
        let q = ctx.solve_on_grid(&fc).unwrap();
        assert!((s.delta - q.delta).abs() < 1e-12 * s.delta.max(1.0), "{} vs {}", s.delta, q.delta);
        for (x, y) in s.h.iter().zip(&q.h) {
            assert!((x - y).norm() < 1e-10);
        }
        let e = error_of_characteristic(&q.h, &q.a_transfer, &tr, &f, &g);
        assert!((e - q.delta).abs() < 1e-12);
    }

    #[test]
    fn single_value_reduced_matches_general() {
        let spec = IncrementSpec::simple(1, 1, 1);
        let ctx = scalar_ctx(|l| 0.8 + 0.3 * l.cos(), |l| 1.0 + 0.5 * l.cos(), spec);
        let reduced = ctx.filter_single_value(3, 0).unwrap();
        let mut a = sv(&[0.0, 0.0, 0.0, 1.0]);
        a[3][0] = 1.0;
        let general = ctx.filter_finite(a).unwrap();
        assert!((reduced.delta - general.delta).abs() < 1e-9);
        assert!(ctx.filter_single_value(0, 1).is_err());
    }
}
