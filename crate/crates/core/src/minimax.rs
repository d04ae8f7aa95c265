//! Least favorable densities and minimax-robust characteristics.
//!
//! The error of the optimal estimate `Delta(f, g)` is concave in the pair of
//! densities. For a fixed characteristic `h` the error is linear:
//! `Delta(h; f, g) = <Tr f w_f> + <Tr g w_g>` with `w_f = conj(h) h^T` and
//! `w_g = conj(A - beta h) (A - beta h)^T`. These weights give the envelope
//! gradient used by the solvers and the best-response bounds behind the
//! reported duality gap.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorization::grid_factor_with_tolerance;
use crate::filter::{error_of_characteristic, filter_on_grid, CVector, FunctionalCoefficients};
use crate::grid::{CMatrix, FrequencyGrid, C64};
use crate::increment::{expand_increment_operator, IncrementSpec};
use crate::spectral::{min_eigenvalue, observed_density, DensityLabel, MatrixDensityGrid, TransferGrid};

/// Relative tolerance of class membership checks.
pub const MEMBERSHIP_TOL: f64 = 1e-8;
/// Relative tolerance for ties when locating the maximizers of `w_g`.
pub const TIE_TOL: f64 = 1e-12;
/// Steps between extrapolations of the scalar fixed point.
const EXTRAPOLATION_PERIOD: usize = 50;
/// Largest exponent of the scalar multiplicative step.
const MAX_EXPONENT: f64 = 64.0;
const EXTRAPOLATIONS: [f64; 3] = [16.0, 4.0, 1.0];
/// Relative shortfalls from the top ratio beyond which tail mass is dropped.
const PRUNE_CUTS: [f64; 5] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
/// Residual tolerance of the grid factorization inside the solvers.
pub const FACTOR_TOL: f64 = 1e-6;

fn c(x: f64) -> C64 {
    C64::new(x, 0.0)
}

fn trace(m: &CMatrix) -> f64 {
    m.trace().re
}

fn hermitian_fn(m: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let h = (m + m.adjoint()).scale(0.5);
    let e = h.symmetric_eigen();
    let d = CMatrix::from_diagonal(&e.eigenvalues.map(|x| c(f(x))));
    &e.eigenvectors * d * e.eigenvectors.adjoint()
}

fn max_eigenvalue(m: &CMatrix) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)].re;
    }
    let h = (m + m.adjoint()).scale(0.5);
    h.symmetric_eigenvalues().iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
}

fn psd_part(m: &CMatrix) -> CMatrix {
    if m.nrows() == 1 {
        return CMatrix::from_element(1, 1, c(m[(0, 0)].re.max(0.0)));
    }
    hermitian_fn(m, |x| x.max(0.0))
}

/// Gershgorin row bounds `W_kk + sum_{l != k} |W_kl|`.
fn gershgorin(m: &CMatrix) -> Vec<f64> {
    (0..m.nrows())
        .map(|k| m[(k, k)].re + (0..m.ncols()).filter(|&l| l != k).map(|l| m[(k, l)].norm()).sum::<f64>())
        .collect()
}

fn mean<I: IntoIterator<Item = f64>>(n: usize, xs: I) -> f64 {
    xs.into_iter().sum::<f64>() / n as f64
}

fn max_of<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    xs.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// `(1/2pi) int w f` with the moment weight `w = |chi|^2 / |beta|^2`.
fn weighted_mean(values: &[CMatrix], w: &[f64]) -> CMatrix {
    let mut acc = CMatrix::zeros(values[0].nrows(), values[0].ncols());
    for (v, &wj) in values.iter().zip(w) {
        acc += v.scale(wj);
    }
    acc.unscale(values.len() as f64)
}

/// Moment constraint of a signal class.
#[derive(Debug, Clone, PartialEq)]
pub enum MomentConstraint {
    /// `(1/2pi) int w f = P`.
    Matrix(CMatrix),
    /// `(1/2pi) int w Tr f = p`.
    Trace(f64),
    /// `(1/2pi) int w f_kk = p_k`.
    Diagonal(Vec<f64>),
    /// `(1/2pi) int w <B, f> = p`.
    Weighted { b: CMatrix, p: f64 },
}

impl MomentConstraint {
    fn index(&self) -> usize {
        match self {
            MomentConstraint::Matrix(_) => 1,
            MomentConstraint::Trace(_) => 2,
            MomentConstraint::Diagonal(_) => 3,
            MomentConstraint::Weighted { .. } => 4,
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.into()));
        match self {
            MomentConstraint::Matrix(p) => {
                if p.nrows() != dim || p.ncols() != dim {
                    return Err(Error::DimensionMismatch("moment matrix size".into()));
                }
                if (p - p.adjoint()).norm() > 1e-12 * p.norm().max(1.0) || min_eigenvalue(p) <= 0.0 {
                    return bad("moment matrix must be Hermitian positive definite");
                }
            }
            MomentConstraint::Trace(p) if !(*p > 0.0) => return bad("moment p must be positive"),
            MomentConstraint::Diagonal(p) => {
                if p.len() != dim {
                    return Err(Error::DimensionMismatch("one moment per coordinate expected".into()));
                }
                if p.iter().any(|x| !(*x > 0.0)) {
                    return bad("moments p_k must be positive");
                }
            }
            MomentConstraint::Weighted { b, p } => {
                if b.nrows() != dim {
                    return Err(Error::DimensionMismatch("weight matrix size".into()));
                }
                if min_eigenvalue(b) <= 0.0 || !(*p > 0.0) {
                    return bad("weight matrix must be positive definite and p positive");
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Relative violation of the moment equality.
    fn violation(&self, f: &[CMatrix], w: &[f64]) -> f64 {
        let m = weighted_mean(f, w);
        match self {
            MomentConstraint::Matrix(p) => (&m - p).norm() / p.norm(),
            MomentConstraint::Trace(p) => (trace(&m) - p).abs() / p,
            MomentConstraint::Diagonal(p) => {
                max_of(p.iter().enumerate().map(|(k, pk)| (m[(k, k)].re - pk).abs() / pk))
            }
            MomentConstraint::Weighted { b, p } => (trace(&(b * &m)) - p).abs() / p,
        }
    }

    /// Node-wise slack of the contamination floor: nonnegative inside.
    fn floor_slack(&self, v: &CMatrix, lo: &CMatrix) -> f64 {
        let d = v - lo;
        match self {
            MomentConstraint::Matrix(_) => min_eigenvalue(&d),
            MomentConstraint::Trace(_) => trace(&d),
            MomentConstraint::Diagonal(_) => (0..d.nrows()).map(|k| d[(k, k)].re).fold(f64::INFINITY, f64::min),
            MomentConstraint::Weighted { b, .. } => trace(&(b * &d)),
        }
    }

    fn restore_floor(&self, v: &CMatrix, lo: &CMatrix) -> CMatrix {
        let dim = v.nrows();
        let eye = CMatrix::identity(dim, dim);
        match self {
            MomentConstraint::Matrix(_) => lo + psd_part(&(v - lo)),
            MomentConstraint::Trace(_) => {
                let s = trace(&(v - lo));
                if s < 0.0 {
                    v + eye.scale(-s / dim as f64)
                } else {
                    v.clone()
                }
            }
            MomentConstraint::Diagonal(_) => {
                let mut out = v.clone();
                for k in 0..dim {
                    let s = (v - lo)[(k, k)].re;
                    if s < 0.0 {
                        out[(k, k)] -= c(s);
                    }
                }
                out
            }
            MomentConstraint::Weighted { b, .. } => {
                let s = trace(&(b * (v - lo)));
                if s < 0.0 {
                    v + eye.scale(-s / trace(b))
                } else {
                    v.clone()
                }
            }
        }
    }

    /// Restores the moment, keeping the floor `lo`.
    fn rescale(&self, f: &[CMatrix], lo: &[CMatrix], w: &[f64]) -> Result<Vec<CMatrix>> {
        let n = f.len();
        let dim = f[0].nrows();
        let eye = CMatrix::identity(dim, dim);
        let mw = mean(n, w.iter().copied());
        match self {
            MomentConstraint::Matrix(p) => {
                let r = p - weighted_mean(lo, w);
                if min_eigenvalue(&r) < -MEMBERSHIP_TOL * p.norm() {
                    return Err(Error::Infeasible("moment of the floor exceeds P".into()));
                }
                let u: Vec<CMatrix> = f.iter().zip(lo).map(|(v, l)| v - l).collect();
                let mu = weighted_mean(&u, w);
                if min_eigenvalue(&mu) <= 1e-14 * mu.norm().max(1e-300) {
                    let add = r.unscale(mw);
                    return Ok(lo.iter().map(|l| l + &add).collect());
                }
                let s = hermitian_fn(&r, |x| x.max(0.0).sqrt()) * hermitian_fn(&mu, |x| 1.0 / x.sqrt());
                Ok(u.iter().zip(lo).map(|(ui, l)| l + &s * ui * s.adjoint()).collect())
            }
            MomentConstraint::Trace(p) => scalar_rescale(f, lo, w, *p, trace, &eye),
            MomentConstraint::Weighted { b, p } => scalar_rescale(f, lo, w, *p, |m| trace(&(b * m)), &eye),
            MomentConstraint::Diagonal(p) => {
                let mut cur = f.to_vec();
                for _ in 0..200 {
                    let m = weighted_mean(&cur, w);
                    let d = CMatrix::from_fn(dim, dim, |i, j| {
                        if i != j {
                            c(0.0)
                        } else if m[(i, i)].re > 0.0 {
                            c((p[i] / m[(i, i)].re).sqrt())
                        } else {
                            c(1.0)
                        }
                    });
                    cur = cur.iter().map(|v| &d * v * &d).collect();
                    for i in 0..dim {
                        if m[(i, i)].re <= 0.0 {
                            for v in cur.iter_mut() {
                                v[(i, i)] += c(p[i] / mw);
                            }
                        }
                    }
                    let mut floored = false;
                    for (v, l) in cur.iter_mut().zip(lo) {
                        if self.floor_slack(v, l) < 0.0 {
                            *v = self.restore_floor(v, l);
                            floored = true;
                        }
                    }
                    if !floored && self.violation(&cur, w) <= 1e-13 {
                        return Ok(cur);
                    }
                }
                if self.violation(&cur, w) <= MEMBERSHIP_TOL {
                    Ok(cur)
                } else {
                    Err(Error::Infeasible("diagonal moments incompatible with the floor".into()))
                }
            }
        }
    }

    /// Upper bound on `sup <Tr f w_f>` over the class (exact for the trace and
    /// weighted kinds and for `T = 1`).
    fn best_response(&self, wf: &[CMatrix], lo: &[CMatrix], w: &[f64]) -> f64 {
        let n = wf.len();
        let dim = wf[0].nrows();
        let ratio = |j: usize| wf[j].unscale(w[j]);
        match self {
            MomentConstraint::Matrix(p) => {
                let base = mean(n, (0..n).map(|j| trace(&(&lo[j] * &wf[j]))));
                let r = p - weighted_mean(lo, w);
                let top = max_of((0..n).map(|j| max_eigenvalue(&ratio(j))));
                let by_trace = trace(&r) * top;
                let rows: Vec<Vec<f64>> = (0..n).map(|j| gershgorin(&ratio(j))).collect();
                let by_rows: f64 =
                    (0..dim).map(|k| r[(k, k)].re * max_of(rows.iter().map(|row| row[k]))).sum();
                base + by_trace.min(by_rows)
            }
            MomentConstraint::Trace(p) => {
                let mu: Vec<f64> = wf.iter().map(max_eigenvalue).collect();
                let lt: Vec<f64> = lo.iter().map(trace).collect();
                let free = p - mean(n, (0..n).map(|j| w[j] * lt[j]));
                mean(n, (0..n).map(|j| lt[j] * mu[j])) + free * max_of((0..n).map(|j| mu[j] / w[j]))
            }
            MomentConstraint::Weighted { b, p } => {
                let bi = hermitian_fn(b, |x| 1.0 / x.sqrt());
                let mu: Vec<f64> = wf.iter().map(|m| max_eigenvalue(&(&bi * m * &bi))).collect();
                let lt: Vec<f64> = lo.iter().map(|l| trace(&(b * l))).collect();
                let free = p - mean(n, (0..n).map(|j| w[j] * lt[j]));
                mean(n, (0..n).map(|j| lt[j] * mu[j])) + free * max_of((0..n).map(|j| mu[j] / w[j]))
            }
            MomentConstraint::Diagonal(p) => {
                let rows: Vec<Vec<f64>> = wf.iter().map(gershgorin).collect();
                (0..dim)
                    .map(|k| {
                        let free = p[k] - mean(n, (0..n).map(|j| w[j] * lo[j][(k, k)].re));
                        mean(n, (0..n).map(|j| lo[j][(k, k)].re * rows[j][k]))
                            + free * max_of((0..n).map(|j| rows[j][k] / w[j]))
                    })
                    .sum()
            }
        }
    }

    /// Target of the moment in the scalar case.
    fn scalar_target(&self) -> f64 {
        match self {
            MomentConstraint::Matrix(p) => p[(0, 0)].re,
            MomentConstraint::Trace(p) => *p,
            MomentConstraint::Diagonal(p) => p[0],
            MomentConstraint::Weighted { b, p } => p / b[(0, 0)].re,
        }
    }
}

fn scalar_rescale(
    f: &[CMatrix],
    lo: &[CMatrix],
    w: &[f64],
    p: f64,
    phi: impl Fn(&CMatrix) -> f64,
    eye: &CMatrix,
) -> Result<Vec<CMatrix>> {
    let m_lo = phi(&weighted_mean(lo, w));
    let m_f = phi(&weighted_mean(f, w));
    if m_lo > p * (1.0 + MEMBERSHIP_TOL) {
        return Err(Error::Infeasible(format!("moment of the floor {m_lo} exceeds {p}")));
    }
    if m_f > p {
        let s = (p - m_lo) / (m_f - m_lo);
        Ok(f.iter().zip(lo).map(|(v, l)| l + (v - l).scale(s)).collect())
    } else if m_f > 0.0 {
        Ok(f.iter().map(|v| v.scale(p / m_f)).collect())
    } else {
        let unit = phi(&weighted_mean(&vec![eye.clone(); f.len()], w));
        Ok(f.iter().map(|v| v + eye.scale(p / unit)).collect())
    }
}

/// Contamination floor `f >= (1 - eps) f_1` in the sense of the moment kind.
#[derive(Debug, Clone)]
pub struct Contamination {
    pub f1: MatrixDensityGrid,
    pub eps: f64,
}

/// Admissible set for the signal density: a moment class, optionally with a
/// contamination floor.
#[derive(Debug, Clone)]
pub struct SignalClass {
    pub moment: MomentConstraint,
    pub contamination: Option<Contamination>,
}

/// Radius of the noise ball around the anchor `g_1`.
#[derive(Debug, Clone, PartialEq)]
pub enum BallRadius {
    /// `(1/2pi) int |g_ij - g1_ij| <= delta_ij`.
    Entrywise(DMatrix<f64>),
    /// `(1/2pi) int |Tr(g - g1)| <= delta`.
    Trace(f64),
    /// `(1/2pi) int |g_kk - g1_kk| <= delta_k`.
    Diagonal(Vec<f64>),
    /// `(1/2pi) int |<B, g - g1>| <= delta`.
    Weighted { b: CMatrix, delta: f64 },
}

#[derive(Debug, Clone)]
pub struct NoiseClass {
    pub g1: MatrixDensityGrid,
    pub radius: BallRadius,
}

/// Pair of admissible classes, or a signal class with known noise.
#[derive(Debug, Clone)]
pub enum DensityClassSpec {
    Pair { f: SignalClass, g: NoiseClass },
    SemiUncertain { f: SignalClass, g: MatrixDensityGrid },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Inside,
    Boundary,
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MembershipReport {
    pub status: Membership,
    /// Largest relative violation; zero inside.
    pub violation: f64,
}

impl MembershipReport {
    pub fn is_admissible(&self) -> bool {
        self.status != Membership::Outside
    }
}

fn psd_violation(d: &MatrixDensityGrid) -> f64 {
    let scale = d.sup_norm().max(1e-300);
    max_of(d.values.iter().map(|v| (-min_eigenvalue(v) / scale).max(0.0))).max(0.0)
}

impl SignalClass {
    pub fn d0(moment: MomentConstraint) -> Self {
        SignalClass { moment, contamination: None }
    }

    pub fn contaminated(moment: MomentConstraint, f1: MatrixDensityGrid, eps: f64) -> Self {
        SignalClass { moment, contamination: Some(Contamination { f1, eps }) }
    }

    pub fn family(&self) -> String {
        let k = self.moment.index();
        if self.contamination.is_some() {
            format!("De_{k}")
        } else {
            format!("D0_{k}")
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        self.moment.validate(dim)?;
        if let Some(ct) = &self.contamination {
            if !(0.0..=1.0).contains(&ct.eps) {
                return Err(Error::InvalidSpec(format!("contamination eps = {} outside [0, 1]", ct.eps)));
            }
            if ct.f1.dim() != dim {
                return Err(Error::DimensionMismatch("anchor f1 dimension".into()));
            }
            ct.f1.validate()?;
        }
        Ok(())
    }

    /// Floor `(1 - eps) f_1` node by node (zero without contamination).
    pub fn floor(&self, grid: &FrequencyGrid, dim: usize) -> Vec<CMatrix> {
        match &self.contamination {
            Some(ct) => ct.f1.values.iter().map(|v| v.scale(1.0 - ct.eps)).collect(),
            None => vec![CMatrix::zeros(dim, dim); grid.size()],
        }
    }

    pub fn membership(&self, f: &MatrixDensityGrid, transfer: &TransferGrid) -> MembershipReport {
        let w: Vec<f64> = (0..f.grid.size()).map(|j| transfer.weight(j)).collect();
        let mut violation = self.moment.violation(&f.values, &w);
        let mut boundary = false;
        if self.contamination.is_some() {
            let lo = self.floor(&f.grid, f.dim());
            let scale = f.sup_norm().max(1e-300);
            for (v, l) in f.values.iter().zip(&lo) {
                let s = self.moment.floor_slack(v, l) / scale;
                violation = violation.max(-s);
                if s.abs() <= MEMBERSHIP_TOL {
                    boundary = true;
                }
            }
        }
        violation = violation.max(psd_violation(f));
        let status = if violation > MEMBERSHIP_TOL {
            Membership::Outside
        } else if boundary {
            Membership::Boundary
        } else {
            Membership::Inside
        };
        MembershipReport { status, violation: if violation > MEMBERSHIP_TOL { violation } else { 0.0 } }
    }

    /// Floor restoration node by node, then moment rescaling of the free part.
    pub fn project(&self, f: &MatrixDensityGrid, transfer: &TransferGrid) -> Result<MatrixDensityGrid> {
        self.validate(f.dim())?;
        let w: Vec<f64> = (0..f.grid.size()).map(|j| transfer.weight(j)).collect();
        let lo = self.floor(&f.grid, f.dim());
        let floored: Vec<CMatrix> = f
            .values
            .iter()
            .zip(&lo)
            .map(|(v, l)| {
                let v = psd_part(v);
                if self.contamination.is_some() {
                    self.moment.restore_floor(&v, l)
                } else {
                    v
                }
            })
            .collect();
        let values = self.moment.rescale(&floored, &lo, &w)?;
        let out = MatrixDensityGrid { grid: f.grid.clone(), values, label: f.label };
        if psd_violation(&out) > MEMBERSHIP_TOL {
            return Err(Error::Infeasible("projection left the positive semidefinite cone".into()));
        }
        Ok(out)
    }
}

impl NoiseClass {
    pub fn family(&self) -> String {
        let k = match self.radius {
            BallRadius::Entrywise(_) => 1,
            BallRadius::Trace(_) => 2,
            BallRadius::Diagonal(_) => 3,
            BallRadius::Weighted { .. } => 4,
        };
        format!("D1d_{k}")
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.g1.dim();
        let neg = |x: &f64| !(*x >= 0.0);
        let ok = match &self.radius {
            BallRadius::Entrywise(d) => d.nrows() == dim && d.ncols() == dim && !d.iter().any(neg),
            BallRadius::Trace(d) => !neg(d),
            BallRadius::Diagonal(d) => d.len() == dim && !d.iter().any(neg),
            BallRadius::Weighted { b, delta } => b.nrows() == dim && min_eigenvalue(b) > 0.0 && !neg(delta),
        };
        if !ok {
            return Err(Error::InvalidSpec("noise radii must be nonnegative with matching dimensions".into()));
        }
        self.g1.validate()
    }

    /// Pairs `(measured deviation, radius)`.
    pub fn deviations(&self, g: &MatrixDensityGrid) -> Vec<(f64, f64)> {
        let n = g.grid.size();
        let d: Vec<CMatrix> = g.values.iter().zip(&self.g1.values).map(|(a, b)| a - b).collect();
        let dim = g.dim();
        match &self.radius {
            BallRadius::Entrywise(r) => (0..dim)
                .flat_map(|i| (0..dim).map(move |j| (i, j)))
                .map(|(i, j)| (mean(n, d.iter().map(|m| m[(i, j)].norm())), r[(i, j)]))
                .collect(),
            BallRadius::Trace(r) => vec![(mean(n, d.iter().map(|m| trace(m).abs())), *r)],
            BallRadius::Diagonal(r) => {
                (0..dim).map(|k| (mean(n, d.iter().map(|m| m[(k, k)].re.abs())), r[k])).collect()
            }
            BallRadius::Weighted { b, delta } => vec![(mean(n, d.iter().map(|m| trace(&(b * m)).abs())), *delta)],
        }
    }

    pub fn membership(&self, g: &MatrixDensityGrid) -> MembershipReport {
        let mut violation: f64 = 0.0;
        let mut boundary = false;
        for (m, r) in self.deviations(g) {
            let scale = r.max(1.0);
            violation = violation.max((m - r) / scale);
            if (m - r).abs() <= MEMBERSHIP_TOL * scale && r > 0.0 {
                boundary = true;
            }
        }
        violation = violation.max(psd_violation(g));
        let status = if violation > MEMBERSHIP_TOL {
            Membership::Outside
        } else if boundary {
            Membership::Boundary
        } else {
            Membership::Inside
        };
        MembershipReport { status, violation: if violation > MEMBERSHIP_TOL { violation } else { 0.0 } }
    }

    /// Shrinks the deviation from the anchor uniformly onto the ball.
    pub fn project(&self, g: &MatrixDensityGrid) -> Result<MatrixDensityGrid> {
        let g = g.map(g.label, |_, v| psd_part(v));
        let mut t: f64 = 1.0;
        for (m, r) in self.deviations(&g) {
            if m > r {
                t = t.min(r / m);
            }
        }
        if t >= 1.0 {
            return Ok(g);
        }
        Ok(g.map(g.label, |j, v| &self.g1.values[j] + (v - &self.g1.values[j]).scale(t)))
    }

    /// Upper bound on `sup <Tr g w_g>` over the ball (exact for the trace and
    /// weighted kinds and for `T = 1`).
    fn best_response(&self, wg: &[CMatrix]) -> f64 {
        let n = wg.len();
        let g1 = &self.g1.values;
        match &self.radius {
            BallRadius::Trace(delta) => {
                let mu: Vec<f64> = wg.iter().map(max_eigenvalue).collect();
                mean(n, (0..n).map(|j| trace(&g1[j]) * mu[j])) + delta * max_of(mu.iter().copied())
            }
            BallRadius::Weighted { b, delta } => {
                let bi = hermitian_fn(b, |x| 1.0 / x.sqrt());
                let mu: Vec<f64> = wg.iter().map(|m| max_eigenvalue(&(&bi * m * &bi))).collect();
                mean(n, (0..n).map(|j| trace(&(b * &g1[j])) * mu[j])) + delta * max_of(mu.iter().copied())
            }
            BallRadius::Diagonal(delta) => {
                let rows: Vec<Vec<f64>> = wg.iter().map(gershgorin).collect();
                (0..delta.len())
                    .map(|k| {
                        mean(n, (0..n).map(|j| g1[j][(k, k)].re * rows[j][k]))
                            + delta[k] * max_of(rows.iter().map(|r| r[k]))
                    })
                    .sum()
            }
            BallRadius::Entrywise(delta) => {
                let dim = delta.nrows();
                let base = mean(n, (0..n).map(|j| trace(&(&g1[j] * &wg[j]))));
                let extra: f64 = (0..dim)
                    .flat_map(|i| (0..dim).map(move |k| (i, k)))
                    .map(|(i, k)| delta[(i, k)] * max_of(wg.iter().map(|m| m[(k, i)].norm())))
                    .sum();
                base + extra
            }
        }
    }

    /// Effective L1 radius in the scalar case.
    fn scalar_radius(&self) -> f64 {
        match &self.radius {
            BallRadius::Entrywise(d) => d[(0, 0)],
            BallRadius::Trace(d) => *d,
            BallRadius::Diagonal(d) => d[0],
            BallRadius::Weighted { b, delta } => delta / b[(0, 0)].norm(),
        }
    }

    /// True when the ball is the single point `g1`: an entrywise ball with
    /// zero radii, or any zero-radius ball for scalar sequences. Zero trace,
    /// weighted or diagonal radii still leave rotations free when `T > 1`.
    fn is_degenerate(&self) -> bool {
        let zero = self.deviations(&self.g1).iter().all(|&(_, r)| r == 0.0);
        zero && (self.g1.dim() == 1 || matches!(self.radius, BallRadius::Entrywise(_)))
    }
}

/// Membership of `f` and `g` in the respective classes.
pub fn class_membership(
    f: &MatrixDensityGrid,
    g: &MatrixDensityGrid,
    classes: &DensityClassSpec,
    transfer: &TransferGrid,
) -> (MembershipReport, MembershipReport) {
    match classes {
        DensityClassSpec::Pair { f: fc, g: gc } => (fc.membership(f, transfer), gc.membership(g)),
        DensityClassSpec::SemiUncertain { f: fc, g: known } => {
            let dev = max_of(g.values.iter().zip(&known.values).map(|(a, b)| (a - b).norm()));
            let scale = known.sup_norm().max(1.0);
            let gr = if dev <= MEMBERSHIP_TOL * scale {
                MembershipReport { status: Membership::Inside, violation: 0.0 }
            } else {
                MembershipReport { status: Membership::Outside, violation: dev / scale }
            };
            (fc.membership(f, transfer), gr)
        }
    }
}

/// Projects a density onto the signal or noise class.
pub fn project_onto_class(
    density: &MatrixDensityGrid,
    classes: &DensityClassSpec,
    transfer: &TransferGrid,
) -> Result<MatrixDensityGrid> {
    match (density.label, classes) {
        (DensityLabel::G, DensityClassSpec::Pair { g, .. }) => g.project(density),
        (DensityLabel::G, DensityClassSpec::SemiUncertain { g, .. }) => Ok(g.clone()),
        (_, DensityClassSpec::Pair { f, .. }) | (_, DensityClassSpec::SemiUncertain { f, .. }) => {
            f.project(density, transfer)
        }
    }
}

/// Functional, increment structure and grid shared by the solvers.
#[derive(Debug, Clone)]
pub struct MinimaxProblem {
    pub spec: IncrementSpec,
    pub grid: FrequencyGrid,
    pub transfer: TransferGrid,
    pub functional: FunctionalCoefficients,
    pub a_transfer: Vec<CVector>,
    weights: Vec<f64>,
}

/// Filter quantities at one density pair.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub delta: f64,
    pub h: Vec<CVector>,
    pub theta: Vec<CMatrix>,
    pub psi: Vec<CMatrix>,
    pub wf: Vec<CMatrix>,
    pub wg: Vec<CMatrix>,
}

impl MinimaxProblem {
    pub fn new(spec: &IncrementSpec, a: Vec<DVector<f64>>, grid: &FrequencyGrid) -> Result<Self> {
        spec.validate()?;
        let e = expand_increment_operator(spec)?;
        let functional = FunctionalCoefficients::new(a, &e.coeffs)?;
        if functional.dim() != spec.period {
            return Err(Error::DimensionMismatch("functional dimension differs from the period".into()));
        }
        let transfer = TransferGrid::new(spec, grid)?;
        let a_transfer = functional.transfer(grid);
        let weights = (0..grid.size()).map(|j| transfer.weight(j)).collect();
        Ok(MinimaxProblem { spec: spec.clone(), grid: grid.clone(), transfer, functional, a_transfer, weights })
    }

    pub fn dim(&self) -> usize {
        self.spec.period
    }

    /// Moment weight `|chi|^2 / |beta|^2` at every node.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Grid-exact filter at `(f, g)` with the envelope weights.
    pub fn evaluate(&self, f: &MatrixDensityGrid, g: &MatrixDensityGrid) -> Result<Snapshot> {
        let p = observed_density(f, g, &self.transfer)?;
        let x = p.map(DensityLabel::Other, |j, v| v.scale(self.weights[j]));
        let theta = grid_factor_with_tolerance(&x, FACTOR_TOL)?;
        let psi: Vec<CMatrix> = theta
            .iter()
            .enumerate()
            .map(|(j, m)| m.clone().try_inverse().ok_or(Error::SingularDensity { node: j, lambda: self.grid.node(j) }))
            .collect::<Result<_>>()?;
        let sol = filter_on_grid(&self.transfer, &psi, g, &self.functional)?;
        let wf = sol.h.iter().map(|h| h.map(|z| z.conj()) * h.transpose()).collect();
        let wg = sol
            .h
            .iter()
            .enumerate()
            .map(|(j, h)| {
                let r = &self.a_transfer[j] - h * self.transfer.beta[j];
                r.map(|z| z.conj()) * r.transpose()
            })
            .collect();
        Ok(Snapshot { delta: sol.delta, h: sol.h, theta, psi, wf, wg })
    }

    /// Error of the fixed characteristic `h` under `(f, g)`.
    pub fn delta_cross(&self, h: &[CVector], f: &MatrixDensityGrid, g: &MatrixDensityGrid) -> f64 {
        error_of_characteristic(h, &self.a_transfer, &self.transfer, f, g)
    }
}

/// Solver controls.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Cap on filter evaluations of the matrix solver.
    pub max_iterations: usize,
    /// Outer rounds of the matrix solver. The scalar fixed point runs at most
    /// `max_outer * max_inner` steps.
    pub max_outer: usize,
    /// Inner steps per round.
    pub max_inner: usize,
    /// Relative improvement below which the ascent stops.
    pub improvement_tol: f64,
    /// Relative duality gap below which the scalar fixed point stops.
    pub gap_tol: f64,
    pub initial_step: f64,
    /// Use the scalar fixed point when `T = 1`; otherwise always ascend.
    pub scalar_fixed_point: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_iterations: 500,
            max_outer: 50,
            max_inner: 5000,
            improvement_tol: 1e-8,
            gap_tol: 1e-11,
            initial_step: 0.5,
            scalar_fixed_point: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Left-hand sides evaluated at `e^{-i lambda}`.
    Direct,
    /// Left-hand sides evaluated at `e^{i lambda}`.
    Mirrored,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquationResidual {
    pub equation: String,
    /// Sup-norm residual relative to the fitted multiplier.
    pub residual: f64,
    pub orientation: Orientation,
    pub nodes: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Multipliers {
    /// Scalar multipliers of the signal equation (eigenvalues of the fitted
    /// matrix for the matrix moment class).
    pub alpha_sq: Vec<f64>,
    /// Multipliers of the noise equation.
    pub beta_sq: Vec<f64>,
    /// Largest `|gamma|` of the noise equation; at most one when consistent.
    pub gamma_noise_max: f64,
    /// Largest `gamma` on the floor-bound region; nonpositive when consistent.
    pub gamma_floor_max: Option<f64>,
}

impl Multipliers {
    /// Sign conditions: `alpha^2, beta^2 >= 0`, `|gamma| <= 1`, floor `gamma <= 0`.
    pub fn signs_ok(&self, tol: f64) -> bool {
        self.alpha_sq.iter().all(|&a| a >= -tol)
            && self.beta_sq.iter().all(|&b| b >= -tol)
            && self.gamma_noise_max <= 1.0 + tol
            && self.gamma_floor_max.is_none_or(|g| g <= tol)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SubgradientReport {
    pub multipliers: Multipliers,
    pub residuals: Vec<EquationResidual>,
    /// Constraint saturation: `|deviation - radius| / max(radius, 1)` per radius.
    pub saturation: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SaddleReport {
    pub samples: usize,
    pub seed: u64,
    /// `min (Delta0 - Delta(h0; f, g))` over sampled feasible pairs.
    pub right_margin: Option<f64>,
    /// `min (Delta(h; f0, g0) - Delta0)` over perturbed characteristics.
    pub left_margin: Option<f64>,
}

/// Candidate least favorable pair with certificates.
#[derive(Debug, Clone)]
pub struct MinimaxSolution {
    pub f0: MatrixDensityGrid,
    pub g0: MatrixDensityGrid,
    pub h0: Vec<CVector>,
    pub delta0: f64,
    /// Upper bound of `sup_{D} Delta(h0; f, g) - Delta0`.
    pub gap: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
    pub snapshot: Snapshot,
    pub subgradient: SubgradientReport,
    pub saddle: Option<SaddleReport>,
    pub warnings: Vec<String>,
}

fn class_parts(classes: &DensityClassSpec) -> (&SignalClass, Option<&NoiseClass>, Option<&MatrixDensityGrid>) {
    match classes {
        DensityClassSpec::Pair { f, g } => (f, Some(g), None),
        DensityClassSpec::SemiUncertain { f, g } => (f, None, Some(g)),
    }
}

fn anchor_g(classes: &DensityClassSpec) -> &MatrixDensityGrid {
    match classes {
        DensityClassSpec::Pair { g, .. } => &g.g1,
        DensityClassSpec::SemiUncertain { g, .. } => g,
    }
}

fn duality_gap(problem: &MinimaxProblem, classes: &DensityClassSpec, snap: &Snapshot) -> f64 {
    let (fc, gc, known) = class_parts(classes);
    let lo = fc.floor(&problem.grid, problem.dim());
    let bf = fc.moment.best_response(&snap.wf, &lo, problem.weights());
    let bg = match (gc, known) {
        (Some(gc), _) => gc.best_response(&snap.wg),
        (None, Some(k)) => mean(k.values.len(), k.values.iter().zip(&snap.wg).map(|(a, b)| trace(&(a * b)))),
        _ => unreachable!(),
    };
    (bf + bg - snap.delta).max(0.0)
}

fn validate_classes(problem: &MinimaxProblem, classes: &DensityClassSpec) -> Result<()> {
    let (fc, gc, known) = class_parts(classes);
    fc.validate(problem.dim())?;
    if let Some(gc) = gc {
        gc.validate()?;
        if gc.g1.grid != problem.grid || gc.g1.dim() != problem.dim() {
            return Err(Error::DimensionMismatch("noise anchor grid or dimension".into()));
        }
    }
    if let Some(k) = known {
        k.validate()?;
        if k.grid != problem.grid || k.dim() != problem.dim() {
            return Err(Error::DimensionMismatch("known noise density grid or dimension".into()));
        }
    }
    Ok(())
}

fn default_signal(problem: &MinimaxProblem, fc: &SignalClass) -> Result<MatrixDensityGrid> {
    let dim = problem.dim();
    let lo = fc.floor(&problem.grid, dim);
    let values: Vec<CMatrix> = lo.iter().map(|l| l + CMatrix::identity(dim, dim)).collect();
    let f = MatrixDensityGrid { grid: problem.grid.clone(), values, label: DensityLabel::F };
    fc.project(&f, &problem.transfer)
}

/// Least favorable pair over `D_f x D_g` (or `D_f` with known `g`).
///
/// Scalar problems use a multiplicative fixed point for `f` and the exact
/// best response for the noise deviation, alternated until the maximizing
/// node set of `w_g` is stable. Matrix problems use projected ascent along
/// the envelope gradient `(w_f, w_g)`.
pub fn solve_least_favorable(
    problem: &MinimaxProblem,
    classes: &DensityClassSpec,
    init: Option<(&MatrixDensityGrid, &MatrixDensityGrid)>,
    settings: &SolverSettings,
) -> Result<MinimaxSolution> {
    validate_classes(problem, classes)?;
    let (fc, _, _) = class_parts(classes);
    let (f, g) = match init {
        Some((f, g)) => (fc.project(f, &problem.transfer)?, project_onto_class(g, classes, &problem.transfer)?),
        None => (default_signal(problem, fc)?, anchor_g(classes).clone()),
    };
    let (f, g, iterations, history) = if problem.dim() == 1 && settings.scalar_fixed_point {
        scalar_solve(problem, classes, f, g, settings)?
    } else {
        ascent_solve(problem, classes, f, g, settings)?
    };
    finish(problem, classes, f, g, iterations, history)
}

/// Least favorable signal density when the noise density `g` is known.
pub fn solve_semi_uncertain(
    problem: &MinimaxProblem,
    class: &SignalClass,
    g: &MatrixDensityGrid,
    init: Option<&MatrixDensityGrid>,
    settings: &SolverSettings,
) -> Result<MinimaxSolution> {
    let classes = DensityClassSpec::SemiUncertain { f: class.clone(), g: g.clone() };
    solve_least_favorable(problem, &classes, init.map(|f| (f, g)), settings)
}

fn scalar_values(v: &[f64], grid: &FrequencyGrid, label: DensityLabel) -> MatrixDensityGrid {
    MatrixDensityGrid {
        grid: grid.clone(),
        values: v.iter().map(|&x| CMatrix::from_element(1, 1, c(x))).collect(),
        label,
    }
}

type SolveState = (MatrixDensityGrid, MatrixDensityGrid, usize, Vec<f64>);

fn scalar_solve(
    problem: &MinimaxProblem,
    classes: &DensityClassSpec,
    f: MatrixDensityGrid,
    g: MatrixDensityGrid,
    settings: &SolverSettings,
) -> Result<SolveState> {
    let (fc, gc, _) = class_parts(classes);
    let n = problem.grid.size();
    let w = problem.weights();
    let lo: Vec<f64> = fc.floor(&problem.grid, 1).iter().map(|m| m[(0, 0)].re).collect();
    let p_free = fc.moment.scalar_target() - mean(n, (0..n).map(|j| w[j] * lo[j]));
    if p_free < -MEMBERSHIP_TOL * fc.moment.scalar_target() {
        return Err(Error::Infeasible("moment of the floor exceeds the target".into()));
    }
    let mut u: Vec<f64> = f.scalar_values().iter().zip(&lo).map(|(a, b)| (a - b).max(0.0)).collect();
    let (g1, delta) = match gc {
        Some(gc) if !gc.is_degenerate() => (gc.g1.scalar_values(), gc.scalar_radius()),
        _ => (g.scalar_values(), 0.0),
    };
    let mut history = Vec::new();
    let mut iterations = 0;
    // Noise deviation from `g1`; extra noise never lowers the error, so it is
    // nonnegative with mean `delta`.
    let mut v = vec![delta; n];
    let build_g = |v: &[f64]| scalar_values(&g1.iter().zip(v).map(|(a, b)| a + b).collect::<Vec<_>>(), &problem.grid, DensityLabel::G);
    let build_f =
        |u: &[f64]| scalar_values(&u.iter().zip(&lo).map(|(a, b)| a + b).collect::<Vec<_>>(), &problem.grid, DensityLabel::F);
    let mut gcur = if delta > 0.0 { build_g(&v) } else { g };
    // Multiplicative fixed point on both free parts: each update keeps the
    // moment and the radius and vanishes exactly on the equalizer conditions.
    // Its slow mode is close to geometric, so every `EXTRAPOLATION_PERIOD`
    // steps the log-space trend is extrapolated, or failing that the nodes
    // trailing the top ratio are dropped; either is kept only if the error
    // does not fall. Dropped nodes cannot return, which at worst leaves the
    // certified gap open.
    let normalize = |u: &mut Vec<f64>, v: &mut Vec<f64>| {
        let m = mean(n, (0..n).map(|j| w[j] * u[j]));
        if p_free > 0.0 && m > 0.0 {
            u.iter_mut().for_each(|x| *x *= p_free / m);
        }
        let m = mean(n, v.iter().copied());
        if delta > 0.0 && m > 0.0 {
            v.iter_mut().for_each(|x| *x *= delta / m);
        }
    };
    let mut anchor: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut exponent: f64 = 1.0;
    let mut snap = problem.evaluate(&build_f(&u), &gcur)?;
    for step in 0..settings.max_outer.max(1) * settings.max_inner {
        history.push(snap.delta);
        iterations += 1;
        if snap.delta == 0.0 {
            break;
        }
        let wf: Vec<f64> = snap.wf.iter().map(|m| m[(0, 0)].re).collect();
        let f_mass = mean(n, (0..n).map(|j| wf[j] * u[j]));
        let f_top = max_of((0..n).map(|j| wf[j] / w[j]));
        let f_gap = if p_free > 0.0 { p_free * f_top - f_mass } else { 0.0 };
        let wg: Vec<f64> = snap.wg.iter().map(|m| m[(0, 0)].re).collect();
        let g_mass = mean(n, (0..n).map(|j| wg[j] * v[j]));
        let g_top = max_of(wg.iter().copied());
        let g_gap = if delta > 0.0 { delta * g_top - g_mass } else { 0.0 };
        if f_gap + g_gap <= settings.gap_tol * snap.delta {
            break;
        }
        if step % EXTRAPOLATION_PERIOD == 0 {
            if let Some((au, av)) = anchor.take() {
                let mut best: Option<(Vec<f64>, Vec<f64>, Snapshot)> = None;
                // Candidates: the extrapolated trend at decreasing reach, the
                // noise deviation concentrated on the maximizers of `w_g`, then
                // the current point with its trailing nodes removed.
                let push = |x: &[f64], a: &[f64], s: f64| -> Vec<f64> {
                    x.iter().zip(a).map(|(&x, &a)| if x > 0.0 && a > 0.0 { x * (x / a).powf(s) } else { x }).collect()
                };
                let prune = |x: &[f64], ratio: &dyn Fn(usize) -> f64, cut: f64| -> Vec<f64> {
                    (0..n).map(|j| if ratio(j) < 1.0 - cut { 0.0 } else { x[j] }).collect()
                };
                let candidates = EXTRAPOLATIONS
                    .iter()
                    .map(|&s| (push(&u, &au, s), push(&v, &av, s)))
                    .chain(std::iter::once((u.clone(), prune(&vec![1.0; n], &|j| wg[j] / g_top, TIE_TOL))))
                    .chain(PRUNE_CUTS.iter().map(|&cut| {
                        (prune(&u, &|j| wf[j] / w[j] / f_top, cut), prune(&v, &|j| wg[j] / g_top, cut))
                    }));
                for (mut eu, mut ev) in candidates {
                    if eu == u && (ev == v || delta == 0.0) {
                        continue;
                    }
                    normalize(&mut eu, &mut ev);
                    if eu.iter().chain(&ev).any(|x| !x.is_finite()) {
                        continue;
                    }
                    let trial = problem.evaluate(&build_f(&eu), &if delta > 0.0 { build_g(&ev) } else { gcur.clone() })?;
                    if trial.delta >= snap.delta {
                        best = Some((eu, ev, trial));
                        break;
                    }
                }
                if let Some((eu, ev, trial)) = best {
                    (u, v, snap) = (eu, ev, trial);
                    if delta > 0.0 {
                        gcur = build_g(&v);
                    }
                    anchor = Some((u.clone(), v.clone()));
                    continue;
                }
            }
            anchor = Some((u.clone(), v.clone()));
        }
        // Exponent one is the plain fixed point and always taken; larger ones
        // are kept while they raise the error.
        let step_at = |kappa: f64| {
            let mut nu = u.clone();
            let mut nv = v.clone();
            if p_free > 0.0 && f_mass > 0.0 {
                nu.iter_mut().enumerate().for_each(|(j, x)| *x *= (wf[j] / w[j] / f_top).powf(kappa));
            }
            if delta > 0.0 && g_mass > 0.0 {
                nv.iter_mut().enumerate().for_each(|(j, x)| *x *= (wg[j] / g_top).powf(kappa));
            }
            normalize(&mut nu, &mut nv);
            (nu, nv)
        };
        let mut kappa = (2.0 * exponent).min(MAX_EXPONENT);
        loop {
            let (nu, nv) = step_at(kappa);
            let ng = if delta > 0.0 { build_g(&nv) } else { gcur.clone() };
            let trial = problem.evaluate(&build_f(&nu), &ng)?;
            if kappa <= 1.0 || trial.delta > snap.delta {
                (u, v, gcur, snap, exponent) = (nu, nv, ng, trial, kappa);
                break;
            }
            kappa = (kappa / 4.0).max(1.0);
        }
    }
    Ok((build_f(&u), gcur, iterations, history))
}

fn ties(n: usize, score: impl Fn(usize) -> f64) -> Vec<usize> {
    let top = max_of((0..n).map(&score));
    (0..n).filter(|&j| score(j) >= top - TIE_TOL * top.abs()).collect()
}

fn top_projector(m: &CMatrix) -> CMatrix {
    let e = ((m + m.adjoint()).scale(0.5)).symmetric_eigen();
    let v = e.eigenvectors.column(e.eigenvalues.imax()).into_owned();
    &v * v.adjoint()
}

/// Best-response vertex of the noise ball. The radius is spent on the
/// maximizing nodes; within the pointwise constraint each node is rotated
/// toward the top direction of `w_g` (exactly for the trace and weighted
/// kinds, by phase alignment for the diagonal kind). Entrywise balls keep the
/// off-diagonal entries of the anchor.
fn noise_vertex(gc: &NoiseClass, wg: &[CMatrix]) -> MatrixDensityGrid {
    let n = wg.len();
    let dim = gc.g1.dim();
    let mut values = gc.g1.values.clone();
    match &gc.radius {
        BallRadius::Trace(delta) => {
            let idx = ties(n, |j| max_eigenvalue(&wg[j]));
            for j in 0..n {
                let extra = if idx.contains(&j) { delta * n as f64 / idx.len() as f64 } else { 0.0 };
                values[j] = top_projector(&wg[j]).scale(trace(&gc.g1.values[j]) + extra);
            }
        }
        BallRadius::Weighted { b, delta } => {
            let bi = hermitian_fn(b, |x| 1.0 / x.sqrt());
            let idx = ties(n, |j| max_eigenvalue(&(&bi * &wg[j] * &bi)));
            for j in 0..n {
                let extra = if idx.contains(&j) { delta * n as f64 / idx.len() as f64 } else { 0.0 };
                let d = &bi * top_projector(&(&bi * &wg[j] * &bi)) * &bi;
                values[j] = d.scale((trace(&(b * &gc.g1.values[j])) + extra) / trace(&(b * &d)));
            }
        }
        BallRadius::Diagonal(_) | BallRadius::Entrywise(_) => {
            for k in 0..dim {
                let dk = match &gc.radius {
                    BallRadius::Diagonal(d) => d[k],
                    BallRadius::Entrywise(d) => d[(k, k)],
                    _ => unreachable!(),
                };
                let idx = ties(n, |j| wg[j][(k, k)].re);
                for &j in &idx {
                    values[j][(k, k)] += c(dk * n as f64 / idx.len() as f64);
                }
            }
            if matches!(gc.radius, BallRadius::Diagonal(_)) && dim > 1 {
                for j in 0..n {
                    let root = CMatrix::from_fn(dim, dim, |i, l| if i == l { c(values[j][(i, i)].re.max(0.0).sqrt()) } else { c(0.0) });
                    let m = &root * &wg[j] * &root;
                    let e = ((&m + m.adjoint()).scale(0.5)).symmetric_eigen();
                    let v = e.eigenvectors.column(e.eigenvalues.imax()).into_owned();
                    let phase = CVector::from_fn(dim, |i, _| if v[i].norm() > 0.0 { v[i] / v[i].norm() } else { c(1.0) });
                    let s = &root * phase;
                    values[j] = &s * s.adjoint();
                }
            }
        }
    }
    MatrixDensityGrid { grid: gc.g1.grid.clone(), values, label: DensityLabel::G }
}

/// Feasible signal density maximizing (or, for the diagonal kind,
/// approximately maximizing) `<Tr f w_f>`: the floor plus the free moment
/// concentrated on the maximizing nodes.
fn signal_vertex(fc: &SignalClass, wf: &[CMatrix], lo: &[CMatrix], w: &[f64]) -> Result<Vec<CMatrix>> {
    let n = wf.len();
    let dim = wf[0].nrows();
    let mut values = lo.to_vec();
    match &fc.moment {
        MomentConstraint::Trace(p) => {
            let free = p - mean(n, (0..n).map(|j| w[j] * trace(&lo[j])));
            let idx = ties(n, |j| max_eigenvalue(&wf[j]) / w[j]);
            for j in 0..n {
                let top = top_projector(&wf[j]);
                let extra = if idx.contains(&j) { free * n as f64 / (idx.len() as f64 * w[j]) } else { 0.0 };
                values[j] = if fc.contamination.is_some() {
                    top.scale(trace(&lo[j]) + extra)
                } else {
                    top.scale(extra)
                };
            }
        }
        MomentConstraint::Weighted { b, p } => {
            let bi = hermitian_fn(b, |x| 1.0 / x.sqrt());
            let free = p - mean(n, (0..n).map(|j| w[j] * trace(&(b * &lo[j]))));
            let idx = ties(n, |j| max_eigenvalue(&(&bi * &wf[j] * &bi)) / w[j]);
            for j in 0..n {
                let d = &bi * top_projector(&(&bi * &wf[j] * &bi)) * &bi;
                let base = if fc.contamination.is_some() { trace(&(b * &lo[j])) } else { 0.0 };
                let extra = if idx.contains(&j) { free * n as f64 / (idx.len() as f64 * w[j]) } else { 0.0 };
                values[j] = d.scale((base + extra) / trace(&(b * &d)));
            }
        }
        MomentConstraint::Diagonal(p) => {
            for k in 0..dim {
                let free = p[k] - mean(n, (0..n).map(|j| w[j] * lo[j][(k, k)].re));
                let idx = ties(n, |j| wf[j][(k, k)].re / w[j]);
                for &j in &idx {
                    values[j][(k, k)] += c(free * n as f64 / (idx.len() as f64 * w[j]));
                }
            }
        }
        MomentConstraint::Matrix(p) => {
            let r = p - weighted_mean(lo, w);
            let idx = ties(n, |j| trace(&(&r * &wf[j])) / w[j]);
            for &j in &idx {
                values[j] += r.scale(n as f64 / (idx.len() as f64 * w[j]));
            }
        }
    }
    if values.iter().any(|v| !v.iter().all(|z| z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::Infeasible("signal vertex is not finite".into()));
    }
    Ok(values)
}

/// Golden-section search of the concave `t -> Delta` on `[0, 1]`.
fn line_search(eval: impl Fn(f64) -> Option<f64>, steps: usize) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (0.0, 1.0);
    let value = |t: f64| eval(t).unwrap_or(f64::NEG_INFINITY);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut v1, mut v2) = (value(x1), value(x2));
    for _ in 0..steps {
        if v1 < v2 {
            a = x1;
            x1 = x2;
            v1 = v2;
            x2 = a + r * (b - a);
            v2 = value(x2);
        } else {
            b = x2;
            x2 = x1;
            v2 = v1;
            x1 = b - r * (b - a);
            v1 = value(x1);
        }
    }
    if v1 >= v2 { (x1, v1) } else { (x2, v2) }
}

/// Matrix solver. An inner damped multiplicative congruence step for `f`,
/// whose fixed points satisfy `w_f / w = alpha^2` on the support, alternates
/// with best responses for `g`; a line-searched Frank-Wolfe step for `g`
/// replaces a best response that does not increase the error.
fn ascent_solve(
    problem: &MinimaxProblem,
    classes: &DensityClassSpec,
    mut f: MatrixDensityGrid,
    mut g: MatrixDensityGrid,
    settings: &SolverSettings,
) -> Result<SolveState> {
    let (fc, gc, _) = class_parts(classes);
    let gc = gc.filter(|gc| !gc.is_degenerate());
    let dim = problem.dim();
    let w = problem.weights();
    let lo = fc.floor(&problem.grid, dim);
    let eye = CMatrix::identity(dim, dim);
    let mut snap = problem.evaluate(&f, &g)?;
    let mut history = vec![snap.delta];
    let mut iterations = 0;
    let mut eta = settings.initial_step;
    for _ in 0..settings.max_outer.max(1) {
        let outer_start = snap.delta;
        for _ in 0..settings.max_inner {
            if iterations >= settings.max_iterations || snap.delta <= 0.0 || eta < 1e-12 {
                break;
            }
            iterations += 1;
            let bound = fc.moment.best_response(&snap.wf, &lo, w);
            let value = mean(f.values.len(), f.values.iter().zip(&snap.wf).map(|(a, b)| trace(&(a * b))));
            if bound - value <= settings.gap_tol * snap.delta {
                break;
            }
            let u: Vec<CMatrix> = f.values.iter().zip(&lo).map(|(v, l)| psd_part(&(v - l))).collect();
            let mass = mean(u.len(), u.iter().zip(&snap.wf).map(|(a, b)| trace(&(a * b))));
            let free = mean(u.len(), u.iter().zip(w).map(|(a, &b)| trace(a) * b));
            if !(mass > 0.0 && free > 0.0) {
                break;
            }
            let alpha = mass / free;
            let stepped = f.map(DensityLabel::F, |j, _| {
                let q = snap.wf[j].unscale(w[j] * alpha);
                let gm = hermitian_fn(&(eye.scale(1.0 - eta) + q.scale(eta)), |x| x.max(0.0).sqrt());
                &lo[j] + &gm * &u[j] * gm.adjoint()
            });
            match fc.project(&stepped, &problem.transfer).and_then(|ft| Ok((problem.evaluate(&ft, &g)?, ft))) {
                Ok((next, ft)) if next.delta > snap.delta => {
                    let gain = (next.delta - snap.delta) / snap.delta;
                    f = ft;
                    snap = next;
                    history.push(snap.delta);
                    eta = (eta * 1.5).min(1.0);
                    if gain < settings.improvement_tol {
                        break;
                    }
                }
                _ => eta *= 0.3,
            }
        }
        eta = eta.max(settings.initial_step);
        let bound = fc.moment.best_response(&snap.wf, &lo, w);
        let value = mean(f.values.len(), f.values.iter().zip(&snap.wf).map(|(a, b)| trace(&(a * b))));
        if bound - value > settings.gap_tol * snap.delta {
            if let Ok(vertex) = signal_vertex(fc, &snap.wf, &lo, w) {
                let at = |t: f64| f.map(DensityLabel::F, |j, v| v + (&vertex[j] - v).scale(t));
                let (t, best) = line_search(|t| problem.evaluate(&at(t), &g).ok().map(|s| s.delta), 40);
                iterations += 1;
                if best > snap.delta {
                    f = at(t);
                    snap = problem.evaluate(&f, &g)?;
                    history.push(snap.delta);
                }
            }
        }
        let Some(gc) = gc else {
            if (snap.delta - outer_start) <= settings.improvement_tol * snap.delta * 1e-2 {
                break;
            }
            continue;
        };
        let vertex = noise_vertex(gc, &snap.wg);
        let at = |t: f64| g.map(DensityLabel::G, |j, v| v + (&vertex.values[j] - v).scale(t));
        let (t, value) = match problem.evaluate(&f, &vertex) {
            Ok(next) if next.delta > snap.delta => (1.0, next.delta),
            _ => line_search(|t| problem.evaluate(&f, &at(t)).ok().map(|s| s.delta), 40),
        };
        iterations += 1;
        if value > snap.delta {
            g = at(t);
            snap = problem.evaluate(&f, &g)?;
            history.push(snap.delta);
        }
        if (snap.delta - outer_start) <= settings.improvement_tol * snap.delta * 1e-2 || iterations >= settings.max_iterations {
            break;
        }
    }
    Ok((f, g, iterations, history))
}

fn finish(
    problem: &MinimaxProblem,
    classes: &DensityClassSpec,
    f: MatrixDensityGrid,
    g: MatrixDensityGrid,
    iterations: usize,
    history: Vec<f64>,
) -> Result<MinimaxSolution> {
    let snap = problem.evaluate(&f, &g)?;
    let gap = duality_gap(problem, classes, &snap);
    let mut warnings = Vec::new();
    let (mf, mg) = class_membership(&f, &g, classes, &problem.transfer);
    if !mf.is_admissible() || !mg.is_admissible() {
        warnings.push(format!("returned pair violates the class constraints ({:.3e}, {:.3e})", mf.violation, mg.violation));
    }
    if gap > 1e-6 * snap.delta.max(1e-300) {
        warnings.push(format!("duality gap bound {gap:.3e} is not small; the candidate may be suboptimal"));
    }
    let mut sol = MinimaxSolution {
        h0: snap.h.clone(),
        delta0: snap.delta,
        gap,
        iterations,
        history,
        subgradient: SubgradientReport { multipliers: Multipliers::default(), residuals: Vec::new(), saturation: Vec::new() },
        snapshot: snap,
        saddle: None,
        warnings,
        f0: f,
        g0: g,
    };
    sol.subgradient = check_subgradient_equations(problem, &sol, classes);
    Ok(sol)
}

/// Fits the multipliers of the equations characterizing the least favorable
/// pair and reports node-wise residuals in both orientations.
pub fn check_subgradient_equations(
    problem: &MinimaxProblem,
    solution: &MinimaxSolution,
    classes: &DensityClassSpec,
) -> SubgradientReport {
    let (fc, gc, _) = class_parts(classes);
    let grid = &problem.grid;
    let n = grid.size();
    let dim = problem.dim();
    let w = problem.weights();
    let snap = &solution.snapshot;
    // Psi^T h_f h_f^* conj(Psi) = conj(w_f) / w and Psi^T h_g h_g^* conj(Psi) = conj(w_g).
    let qf: Vec<CMatrix> = (0..n).map(|j| snap.wf[j].map(|z| z.conj()).unscale(w[j])).collect();
    let qg: Vec<CMatrix> = snap.wg.iter().map(|m| m.map(|z| z.conj())).collect();
    let lo = fc.floor(grid, dim);
    let scale_f = max_of(solution.f0.values.iter().map(trace)).max(1e-300);
    let slack: Vec<f64> = (0..n)
        .map(|j| {
            if fc.contamination.is_some() {
                fc.moment.floor_slack(&solution.f0.values[j], &lo[j]) / scale_f
            } else {
                trace(&solution.f0.values[j]) / scale_f
            }
        })
        .collect();
    let active: Vec<usize> = (0..n).filter(|&j| slack[j] > 1e-6).collect();
    let bound: Vec<usize> = (0..n).filter(|&j| slack[j] <= 1e-6).collect();

    let mut multipliers = Multipliers::default();
    let mut residuals = Vec::new();
    let mut best_f: Option<(EquationResidual, CMatrix)> = None;
    for orientation in [Orientation::Direct, Orientation::Mirrored] {
        let at = |j: usize| match orientation {
            Orientation::Direct => qf[j].clone(),
            Orientation::Mirrored => qf[grid.mirror(j)].clone(),
        };
        if active.is_empty() {
            break;
        }
        let fitted = fit_signal(&fc.moment, &active.iter().map(|&j| at(j)).collect::<Vec<_>>());
        let norm = fitted.norm().max(1e-300);
        let res = max_of(active.iter().map(|&j| (at(j) - &fitted).norm() / norm));
        let r = EquationResidual { equation: format!("{} signal", fc.family()), residual: res, orientation, nodes: active.len() };
        if best_f.as_ref().is_none_or(|(b, _)| r.residual < b.residual) {
            best_f = Some((r, fitted));
        }
    }
    if let Some((r, fitted)) = best_f {
        let orientation = r.orientation;
        multipliers.alpha_sq = match &fc.moment {
            MomentConstraint::Matrix(_) => fitted.clone().symmetric_eigenvalues().iter().copied().collect(),
            MomentConstraint::Diagonal(_) => (0..dim).map(|k| fitted[(k, k)].re).collect(),
            MomentConstraint::Trace(_) => vec![fitted[(0, 0)].re],
            MomentConstraint::Weighted { b, .. } => vec![fitted[(0, 0)].re / b[(0, 0)].re],
        };
        if fc.contamination.is_some() {
            let norm = fitted.norm().max(1e-300);
            let at = |j: usize| match orientation {
                Orientation::Direct => qf[j].clone(),
                Orientation::Mirrored => qf[grid.mirror(j)].clone(),
            };
            multipliers.gamma_floor_max =
                Some(if bound.is_empty() { f64::NEG_INFINITY } else { max_of(bound.iter().map(|&j| max_eigenvalue(&(at(j) - &fitted)) / norm)) });
        }
        residuals.push(r);
    }

    let mut saturation = Vec::new();
    if let Some(gc) = gc {
        for (m, r) in gc.deviations(&solution.g0) {
            saturation.push((m - r).abs() / r.max(1.0));
        }
        let dev: Vec<CMatrix> = solution.g0.values.iter().zip(&gc.g1.values).map(|(a, b)| a - b).collect();
        let scale_g = max_of(dev.iter().map(|d| d.norm())).max(1e-300);
        let support: Vec<usize> = (0..n).filter(|&j| dev[j].norm() > 1e-9 * scale_g).collect();
        if !support.is_empty() && !gc.is_degenerate() {
            let mut best: Option<(EquationResidual, Vec<f64>, f64)> = None;
            for orientation in [Orientation::Direct, Orientation::Mirrored] {
                let at = |j: usize| match orientation {
                    Orientation::Direct => qg[j].clone(),
                    Orientation::Mirrored => qg[grid.mirror(j)].clone(),
                };
                let (betas, res, gmax) = fit_noise(&gc.radius, &dev, &support, n, &at);
                let r = EquationResidual { equation: format!("{} noise", gc.family()), residual: res, orientation, nodes: support.len() };
                if best.as_ref().is_none_or(|(b, _, _)| r.residual < b.residual) {
                    best = Some((r, betas, gmax));
                }
            }
            if let Some((r, betas, gmax)) = best {
                multipliers.beta_sq = betas;
                multipliers.gamma_noise_max = gmax;
                residuals.push(r);
            }
        }
    }
    SubgradientReport { multipliers, residuals, saturation }
}

/// Least-squares fit of the constant right-hand side of the signal equation.
fn fit_signal(moment: &MomentConstraint, q: &[CMatrix]) -> CMatrix {
    let dim = q[0].nrows();
    let avg = q.iter().fold(CMatrix::zeros(dim, dim), |a, b| a + b).unscale(q.len() as f64);
    match moment {
        MomentConstraint::Matrix(_) => (&avg + avg.adjoint()).scale(0.5),
        MomentConstraint::Trace(_) => CMatrix::identity(dim, dim).scale((trace(&avg) / dim as f64).max(0.0)),
        MomentConstraint::Diagonal(_) => {
            CMatrix::from_fn(dim, dim, |i, j| if i == j { c(avg[(i, i)].re.max(0.0)) } else { c(0.0) })
        }
        MomentConstraint::Weighted { b, .. } => {
            let a = (trace(&(&avg * b)) / trace(&(b * b))).max(0.0);
            b.scale(a)
        }
    }
}

/// Fits the noise multipliers on the deviation support, weighting nodes by
/// deviation mass; returns multipliers,
/// sup residual and the largest `|gamma|` over all nodes.
fn fit_noise(
    radius: &BallRadius,
    dev: &[CMatrix],
    support: &[usize],
    n: usize,
    at: &dyn Fn(usize) -> CMatrix,
) -> (Vec<f64>, f64, f64) {
    let dim = dev[0].nrows();
    let eye = CMatrix::identity(dim, dim);
    let sign = |x: f64| if x >= 0.0 { 1.0 } else { -1.0 };
    let (basis, phase): (CMatrix, Box<dyn Fn(&CMatrix) -> f64>) = match radius {
        BallRadius::Trace(_) => (eye.clone(), Box::new(move |d: &CMatrix| sign(trace(d)))),
        BallRadius::Weighted { b, .. } => {
            let bb = b.clone();
            (b.clone(), Box::new(move |d: &CMatrix| sign(trace(&(&bb * d)))))
        }
        BallRadius::Diagonal(_) | BallRadius::Entrywise(_) => {
            let mut betas = Vec::new();
            let mut res: f64 = 0.0;
            let mut gmax: f64 = 0.0;
            let pairs: Vec<(usize, usize)> = match radius {
                BallRadius::Diagonal(_) => (0..dim).map(|k| (k, k)).collect(),
                _ => (0..dim).flat_map(|i| (0..dim).map(move |j| (i, j))).collect(),
            };
            for (i, k) in pairs {
                let nodes: Vec<usize> = support.iter().copied().filter(|&j| dev[j][(i, k)].norm() > 0.0).collect();
                if nodes.is_empty() {
                    betas.push(0.0);
                    continue;
                }
                let unit = |j: usize| dev[j][(i, k)] / dev[j][(i, k)].norm();
                let mass: f64 = nodes.iter().map(|&j| dev[j][(i, k)].norm()).sum();
                let beta = (nodes.iter().map(|&j| dev[j][(i, k)].norm() * (at(j)[(i, k)] / unit(j)).re).sum::<f64>() / mass).max(0.0);
                betas.push(beta);
                let scale = beta.max(1e-300);
                res = res.max(max_of(nodes.iter().map(|&j| (at(j)[(i, k)] - unit(j) * beta).norm() / scale)));
                gmax = gmax.max(max_of((0..n).map(|j| at(j)[(i, k)].norm() / scale)));
            }
            return (betas, res, gmax);
        }
    };
    let bnorm = trace(&(&basis * &basis));
    // Mass-weighted, so nodes whose deviation is still decaying barely count.
    let mass: Vec<f64> = support.iter().map(|&j| dev[j].norm()).collect();
    let beta = (support.iter().zip(&mass).map(|(&j, m)| m * phase(&dev[j]) * trace(&(at(j) * &basis))).sum::<f64>()
        / (mass.iter().sum::<f64>() * bnorm))
        .max(0.0);
    let scale = (beta * basis.norm()).max(1e-300);
    let res = max_of(support.iter().map(|&j| (at(j) - basis.scale(beta * phase(&dev[j]))).norm() / scale));
    let gmax = max_of((0..n).map(|j| (trace(&(at(j) * &basis)) / (bnorm * beta.max(1e-300))).abs()));
    (vec![beta], res, gmax)
}

/// Smooth random density `B(z) B(z)^*` with real coefficients.
fn random_density(grid: &FrequencyGrid, dim: usize, rng: &mut ChaCha8Rng, label: DensityLabel) -> MatrixDensityGrid {
    let order = 3;
    let coeffs: Vec<DMatrix<f64>> = (0..=order)
        .map(|k| {
            let decay = 0.7f64.powi(k);
            let mut m = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0) * decay);
            if k == 0 {
                m += DMatrix::identity(dim, dim) * 1.5;
            }
            m
        })
        .collect();
    let values = grid
        .nodes()
        .iter()
        .map(|&l| {
            let mut b = CMatrix::zeros(dim, dim);
            for (k, m) in coeffs.iter().enumerate() {
                b += m.map(|x| C64::from_polar(x, -l * k as f64));
            }
            let v = &b * b.adjoint();
            (&v + v.adjoint()).scale(0.5)
        })
        .collect();
    MatrixDensityGrid { grid: grid.clone(), values, label }
}

fn sample_signal(problem: &MinimaxProblem, fc: &SignalClass, rng: &mut ChaCha8Rng) -> Result<MatrixDensityGrid> {
    let dim = problem.dim();
    let lo = fc.floor(&problem.grid, dim);
    let r = random_density(&problem.grid, dim, rng, DensityLabel::F);
    // Mix in increment scaling so the samples cover both smooth and
    // structural-weight shapes.
    let t: f64 = rng.random_range(0.0..1.0);
    let f = r.map(DensityLabel::F, |j, v| &lo[j] + v.scale((1.0 - t) + t / problem.weights()[j].max(1e-3)));
    fc.project(&f, &problem.transfer)
}

fn sample_noise(problem: &MinimaxProblem, gc: &NoiseClass, rng: &mut ChaCha8Rng) -> Result<MatrixDensityGrid> {
    let dim = problem.dim();
    let a = random_density(&problem.grid, dim, rng, DensityLabel::G);
    let b = random_density(&problem.grid, dim, rng, DensityLabel::G);
    let d: Vec<CMatrix> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
    let unit = MatrixDensityGrid { grid: problem.grid.clone(), values: d, label: DensityLabel::G };
    let probe = unit.map(DensityLabel::G, |j, v| &gc.g1.values[j] + v);
    let mut t = f64::INFINITY;
    for (m, r) in gc.deviations(&probe) {
        if m > 0.0 {
            t = t.min(r / m);
        }
    }
    if !t.is_finite() {
        t = 0.0;
    }
    let mut s = t * rng.random_range(0.0..1.0);
    loop {
        let g = unit.map(DensityLabel::G, |j, v| &gc.g1.values[j] + v.scale(s));
        if psd_violation(&g) == 0.0 && g.values.iter().all(|v| min_eigenvalue(v) >= 0.0) {
            return Ok(g);
        }
        s *= 0.5;
        if s < 1e-12 {
            return Ok(gc.g1.clone());
        }
    }
}

fn sample_seed(master: u64, index: u64) -> u64 {
    master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Sampled saddle-point margins. The right inequality uses random feasible
/// pairs; the left uses characteristics `h0 + chi/beta Psi0^T R` with random
/// causal polynomials `R`.
pub fn check_saddle_point(
    problem: &MinimaxProblem,
    solution: &MinimaxSolution,
    classes: &DensityClassSpec,
    samples: usize,
    seed: u64,
) -> Result<SaddleReport> {
    let (fc, gc, known) = class_parts(classes);
    let mut right: Option<f64> = None;
    let mut left: Option<f64> = None;
    let dim = problem.dim();
    for i in 0..samples {
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(seed, i as u64));
        let f = sample_signal(problem, fc, &mut rng)?;
        let g = match (gc, known) {
            (Some(gc), _) => sample_noise(problem, gc, &mut rng)?,
            (None, Some(k)) => k.clone(),
            _ => unreachable!(),
        };
        let margin = solution.delta0 - problem.delta_cross(&solution.h0, &f, &g);
        right = Some(right.map_or(margin, |r: f64| r.min(margin)));

        let order = 3;
        let r: Vec<DVector<f64>> =
            (0..=order).map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-0.5..0.5))).collect();
        let h: Vec<CVector> = problem
            .grid
            .nodes()
            .iter()
            .enumerate()
            .map(|(j, &l)| {
                let mut rz = CVector::zeros(dim);
                for (k, rk) in r.iter().enumerate() {
                    rz += rk.map(|x| C64::from_polar(x, -l * k as f64));
                }
                &solution.h0[j] + solution.snapshot.psi[j].transpose() * rz * problem.transfer.ratio[j]
            })
            .collect();
        let lm = problem.delta_cross(&h, &solution.f0, &solution.g0) - solution.delta0;
        left = Some(left.map_or(lm, |x: f64| x.min(lm)));
    }
    Ok(SaddleReport { samples, seed, right_margin: right, left_margin: left })
}
