//! Transfer functions of the increment operator and matrix spectral densities
//! sampled on the frequency grid.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CMatrix, FrequencyGrid, C64};
use crate::increment::{expand_increment_operator, IncrementSpec};

/// Hermitian tolerance for node values.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Eigenvalue floor below which a node is not positive semidefinite.
pub const PSD_TOL: f64 = -1e-10;

/// `chi(e^{-i lambda})`, `beta(i lambda)` and their ratio on the grid.
#[derive(Debug, Clone)]
pub struct TransferGrid {
    pub chi: Vec<C64>,
    pub beta: Vec<C64>,
    pub ratio: Vec<C64>,
}

impl TransferGrid {
    pub fn new(spec: &IncrementSpec, grid: &FrequencyGrid) -> Result<Self> {
        let chi = eval_chi(spec, grid);
        let beta = eval_beta(spec, grid);
        let mut ratio = Vec::with_capacity(chi.len());
        for (j, (c, b)) in chi.iter().zip(&beta).enumerate() {
            if c.norm() < 1e-13 || b.norm() == 0.0 {
                return Err(Error::VanishingTransfer { node: j });
            }
            ratio.push(c / b);
        }
        Ok(TransferGrid { chi, beta, ratio })
    }

    /// `|beta|^2 / |chi|^2` at node `j`: the weight that turns an increment
    /// density into the observed-increment scale and back.
    pub fn inverse_weight(&self, j: usize) -> f64 {
        1.0 / self.ratio[j].norm_sqr()
    }

    /// `|chi|^2 / |beta|^2` at node `j`: the moment weight of the class
    /// constraints.
    pub fn weight(&self, j: usize) -> f64 {
        self.ratio[j].norm_sqr()
    }

    pub fn beta_sq(&self, j: usize) -> f64 {
        self.beta[j].norm_sqr()
    }
}

/// `prod_j (1 - e^{-i lambda mu_j s_j})^{d_j}` at every node.
pub fn eval_chi(spec: &IncrementSpec, grid: &FrequencyGrid) -> Vec<C64> {
    grid.nodes()
        .iter()
        .map(|&l| {
            let mut acc = C64::new(1.0, 0.0);
            for ((&m, &s), &d) in spec.mu.iter().zip(&spec.s).zip(&spec.d) {
                let f = C64::new(1.0, 0.0) - C64::from_polar(1.0, -l * (m * s) as f64);
                acc *= f.powu(d);
            }
            acc
        })
        .collect()
}

/// `sum_k e(k) e^{-i lambda k}` at every node, the polynomial form of chi.
pub fn eval_chi_polynomial(spec: &IncrementSpec, grid: &FrequencyGrid) -> Result<Vec<C64>> {
    let e = expand_increment_operator(spec)?;
    Ok(grid
        .nodes()
        .iter()
        .map(|&l| {
            e.coeffs
                .iter()
                .enumerate()
                .map(|(k, &c)| C64::from_polar(c as f64, -l * k as f64))
                .sum()
        })
        .collect())
}

/// `prod_j prod_{k=-[s_j/2]}^{[s_j/2]} (i lambda - 2 pi i k / s_j)^{d_j}`.
pub fn eval_beta(spec: &IncrementSpec, grid: &FrequencyGrid) -> Vec<C64> {
    grid.nodes()
        .iter()
        .map(|&l| {
            let mut acc = C64::new(1.0, 0.0);
            for (&s, &d) in spec.s.iter().zip(&spec.d) {
                let h = (s / 2) as i64;
                for k in -h..=h {
                    let f = C64::new(0.0, l - 2.0 * PI * k as f64 / s as f64);
                    acc *= f.powu(d);
                }
            }
            acc
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityLabel {
    F,
    G,
    P,
    Other,
}

/// Hermitian `T x T` matrix density sampled at every grid node.
#[derive(Debug, Clone)]
pub struct MatrixDensityGrid {
    pub grid: FrequencyGrid,
    pub values: Vec<CMatrix>,
    pub label: DensityLabel,
}

impl MatrixDensityGrid {
    pub fn new(grid: FrequencyGrid, values: Vec<CMatrix>, label: DensityLabel) -> Result<Self> {
        if values.len() != grid.size() {
            return Err(Error::DimensionMismatch(format!(
                "{} density values for a grid of {} nodes",
                values.len(),
                grid.size()
            )));
        }
        let t = values[0].nrows();
        if values.iter().any(|v| v.nrows() != t || v.ncols() != t) {
            return Err(Error::DimensionMismatch("density values must be square with a common size".into()));
        }
        Ok(MatrixDensityGrid { grid, values, label })
    }

    pub fn from_fn(grid: &FrequencyGrid, label: DensityLabel, f: impl Fn(f64) -> CMatrix) -> Result<Self> {
        let values = grid.nodes().iter().map(|&l| f(l)).collect();
        Self::new(grid.clone(), values, label)
    }

    pub fn from_scalar_fn(grid: &FrequencyGrid, label: DensityLabel, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&l| CMatrix::from_element(1, 1, C64::new(f(l), 0.0))).collect();
        MatrixDensityGrid { grid: grid.clone(), values, label }
    }

    pub fn constant(grid: &FrequencyGrid, label: DensityLabel, value: CMatrix) -> Self {
        MatrixDensityGrid { grid: grid.clone(), values: vec![value; grid.size()], label }
    }

    pub fn zeros(grid: &FrequencyGrid, label: DensityLabel, dim: usize) -> Self {
        Self::constant(grid, label, CMatrix::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.values[0].nrows()
    }

    pub fn scaled(&self, c: f64) -> Self {
        MatrixDensityGrid {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v.scale(c)).collect(),
            label: self.label,
        }
    }

    pub fn map(&self, label: DensityLabel, f: impl Fn(usize, &CMatrix) -> CMatrix) -> Self {
        MatrixDensityGrid {
            grid: self.grid.clone(),
            values: self.values.iter().enumerate().map(|(j, v)| f(j, v)).collect(),
            label,
        }
    }

    /// Scalar values when the density is `1 x 1`.
    pub fn scalar_values(&self) -> Vec<f64> {
        self.values.iter().map(|v| v[(0, 0)].re).collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.iter().all(|x| *x == C64::new(0.0, 0.0)))
    }

    /// Checks the Hermitian, PSD and real-sequence reflection invariants.
    pub fn validate(&self) -> Result<()> {
        for (j, v) in self.values.iter().enumerate() {
            let scale = v.norm().max(1.0);
            if (v - v.adjoint()).norm() > HERMITIAN_TOL * scale {
                return Err(Error::InvalidDensity(format!("value at node {j} is not Hermitian")));
            }
            let min = min_eigenvalue(v);
            if min < PSD_TOL * scale {
                return Err(Error::NotPositiveDefinite { node: j, lambda: self.grid.node(j), min_eig: min });
            }
            let m = self.grid.mirror(j);
            if (&self.values[m] - v.transpose()).norm() > 1e-10 * scale {
                return Err(Error::InvalidDensity(format!(
                    "value at node {j} violates the real-sequence reflection symmetry"
                )));
            }
        }
        Ok(())
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid || self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "densities on grids {}/{} with dimensions {}/{}",
                self.grid.size(),
                other.grid.size(),
                self.dim(),
                other.dim()
            )));
        }
        Ok(())
    }
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)].re;
    }
    let h = (m + m.adjoint()).scale(0.5);
    h.symmetric_eigenvalues().iter().fold(f64::INFINITY, |a, &b| a.min(b))
}

/// `p = f + |beta|^2 g` node by node.
pub fn observed_density(
    f: &MatrixDensityGrid,
    g: &MatrixDensityGrid,
    transfer: &TransferGrid,
) -> Result<MatrixDensityGrid> {
    f.check_compatible(g)?;
    Ok(MatrixDensityGrid {
        grid: f.grid.clone(),
        values: f
            .values
            .iter()
            .zip(&g.values)
            .enumerate()
            .map(|(j, (fv, gv))| fv + gv.scale(transfer.beta_sq(j)))
            .collect(),
        label: DensityLabel::P,
    })
}

/// Outcome of the minimality (integrability) heuristic.
#[derive(Debug, Clone, Serialize)]
pub struct MinimalityReport {
    pub grid_sizes: Vec<usize>,
    pub values: Vec<f64>,
    pub suspect: bool,
}

/// Quadrature of `Tr[(|beta|^2/|chi|^2) p^{-1}]` at successive refinements.
/// Densities are supplied as closures so each level can be sampled afresh.
pub fn minimality_value(
    f: &dyn Fn(f64) -> CMatrix,
    g: &dyn Fn(f64) -> CMatrix,
    spec: &IncrementSpec,
    grid_sizes: &[usize],
) -> Result<MinimalityReport> {
    let levels = grid_sizes
        .iter()
        .map(|&n| {
            let grid = FrequencyGrid::new(n)?;
            let fg = MatrixDensityGrid::from_fn(&grid, DensityLabel::F, f)?;
            let gg = MatrixDensityGrid::from_fn(&grid, DensityLabel::G, g)?;
            Ok((fg, gg))
        })
        .collect::<Result<Vec<_>>>()?;
    minimality_on_grids(&levels, spec)
}

/// Same heuristic for densities already sampled at each refinement level.
pub fn minimality_on_grids(
    levels: &[(MatrixDensityGrid, MatrixDensityGrid)],
    spec: &IncrementSpec,
) -> Result<MinimalityReport> {
    let mut values = Vec::with_capacity(levels.len());
    let mut grid_sizes = Vec::with_capacity(levels.len());
    for (f, g) in levels {
        f.check_compatible(g)?;
        let grid = &f.grid;
        let tr = TransferGrid::new(spec, grid)?;
        let mut acc = 0.0;
        for (j, &l) in grid.nodes().iter().enumerate() {
            let p = &f.values[j] + g.values[j].scale(tr.beta_sq(j));
            let inv = p.try_inverse().ok_or(Error::SingularDensity { node: j, lambda: l })?;
            if !inv.iter().all(|x| x.re.is_finite() && x.im.is_finite()) {
                return Err(Error::SingularDensity { node: j, lambda: l });
            }
            acc += inv.trace().re * tr.inverse_weight(j);
        }
        values.push(acc / grid.size() as f64);
        grid_sizes.push(grid.size());
    }
    let suspect = values.windows(2).any(|w| w[1] > 2.0 * w[0].abs());
    Ok(MinimalityReport { grid_sizes, values, suspect })
}

/// Quadrature of `(1/2pi) int e^{i lambda m} chi_1(e^{-i lambda}) conj(chi_2(e^{-i lambda}))
/// |beta|^{-2} density(lambda)` with `chi_1`, `chi_2` built from step vectors `mu1`, `mu2`.
pub fn structural_covariance(
    density: &MatrixDensityGrid,
    spec: &IncrementSpec,
    lag: i64,
    mu1: &[u32],
    mu2: &[u32],
) -> Result<CMatrix> {
    let s1 = IncrementSpec { mu: mu1.to_vec(), ..spec.clone() };
    let s2 = IncrementSpec { mu: mu2.to_vec(), ..spec.clone() };
    s1.validate()?;
    s2.validate()?;
    let grid = &density.grid;
    let c1 = eval_chi(&s1, grid);
    let c2 = eval_chi(&s2, grid);
    let b = eval_beta(spec, grid);
    let t = density.dim();
    let mut acc = CMatrix::zeros(t, t);
    for (j, &l) in grid.nodes().iter().enumerate() {
        let w = C64::from_polar(1.0, l * lag as f64) * c1[j] * c2[j].conj() / b[j].norm_sqr();
        acc += density.values[j].map(|x| x * w);
    }
    Ok(acc.unscale(grid.size() as f64))
}

/// A real or complex matrix as accepted from configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixInput {
    Scalar(f64),
    Real(Vec<Vec<f64>>),
    Complex { re: Vec<Vec<f64>>, im: Vec<Vec<f64>> },
}

impl MatrixInput {
    pub fn to_matrix(&self, dim: usize) -> Result<CMatrix> {
        let m = match self {
            MatrixInput::Scalar(x) => CMatrix::identity(dim, dim).scale(*x),
            MatrixInput::Real(rows) => real_rows(rows)?.map(|x| C64::new(x, 0.0)),
            MatrixInput::Complex { re, im } => {
                let r = real_rows(re)?;
                let i = real_rows(im)?;
                if r.shape() != i.shape() {
                    return Err(Error::InvalidDensity("real and imaginary parts differ in shape".into()));
                }
                r.zip_map(&i, C64::new)
            }
        };
        if m.nrows() != dim || m.ncols() != dim {
            return Err(Error::DimensionMismatch(format!(
                "matrix of shape {:?} where {dim}x{dim} was expected",
                m.shape()
            )));
        }
        Ok(m)
    }
}

fn real_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |x| x.len());
    if r == 0 || rows.iter().any(|x| x.len() != c) {
        return Err(Error::InvalidDensity("matrix rows must be non-empty and of equal length".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

/// Parametric description of a spectral density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensityForm {
    /// Constant matrix (white spectrum).
    Constant { value: MatrixInput },
    /// `B(z) S B(z)^* / |a(z)|^2` with `z = e^{-i lambda}`, `B` a matrix
    /// polynomial and `a` a scalar polynomial.
    Rational {
        numerator: Vec<MatrixInput>,
        #[serde(default = "unit_poly")]
        denominator: Vec<f64>,
        #[serde(default)]
        innovation: Option<MatrixInput>,
    },
    /// Explicit node values; length must equal the grid size.
    Tabulated { values: Vec<MatrixInput> },
}

fn unit_poly() -> Vec<f64> {
    vec![1.0]
}

/// A density form plus global modifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySpec {
    #[serde(flatten)]
    pub form: DensityForm,
    /// Multiply by `|beta|^2 / |chi|^2`, so that the form describes the
    /// spectral density of the observed increments rather than `f` itself.
    #[serde(default)]
    pub increment_scaled: bool,
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

fn unit_scale() -> f64 {
    1.0
}

impl DensitySpec {
    pub fn constant(value: MatrixInput) -> Self {
        DensitySpec { form: DensityForm::Constant { value }, increment_scaled: false, scale: 1.0 }
    }

    pub fn rational(numerator: Vec<MatrixInput>, denominator: Vec<f64>) -> Self {
        DensitySpec {
            form: DensityForm::Rational { numerator, denominator, innovation: None },
            increment_scaled: false,
            scale: 1.0,
        }
    }

    pub fn increment_scaled(mut self) -> Self {
        self.increment_scaled = true;
        self
    }

    /// Samples the density on the grid.
    pub fn evaluate(
        &self,
        grid: &FrequencyGrid,
        dim: usize,
        transfer: &TransferGrid,
        label: DensityLabel,
    ) -> Result<MatrixDensityGrid> {
        let mut values: Vec<CMatrix> = match &self.form {
            DensityForm::Constant { value } => vec![value.to_matrix(dim)?; grid.size()],
            DensityForm::Rational { numerator, denominator, innovation } => {
                if numerator.is_empty() || denominator.is_empty() {
                    return Err(Error::InvalidDensity("rational density needs coefficients".into()));
                }
                let b: Vec<CMatrix> = numerator.iter().map(|m| m.to_matrix(dim)).collect::<Result<_>>()?;
                let s = match innovation {
                    Some(m) => m.to_matrix(dim)?,
                    None => CMatrix::identity(dim, dim),
                };
                let mut out = Vec::with_capacity(grid.size());
                for (j, &l) in grid.nodes().iter().enumerate() {
                    let mut bz = CMatrix::zeros(dim, dim);
                    for (k, bk) in b.iter().enumerate() {
                        bz += bk.map(|x| x * C64::from_polar(1.0, -l * k as f64));
                    }
                    let az: C64 =
                        denominator.iter().enumerate().map(|(k, &a)| C64::from_polar(a, -l * k as f64)).sum();
                    if az.norm() < 1e-14 {
                        return Err(Error::SingularDensity { node: j, lambda: l });
                    }
                    let v = &bz * &s * bz.adjoint();
                    out.push(v.unscale(az.norm_sqr()));
                }
                out
            }
            DensityForm::Tabulated { values } => {
                if values.len() != grid.size() {
                    return Err(Error::DimensionMismatch(format!(
                        "tabulated density has {} values for a grid of {} nodes",
                        values.len(),
                        grid.size()
                    )));
                }
                values.iter().map(|m| m.to_matrix(dim)).collect::<Result<_>>()?
            }
        };
        for (j, v) in values.iter_mut().enumerate() {
            let mut w = self.scale;
            if self.increment_scaled {
                w *= transfer.inverse_weight(j);
            }
            *v = v.scale(w);
            // Symmetrize away roundoff from the matrix products.
            *v = (&*v + v.adjoint()).scale(0.5);
        }
        let d = MatrixDensityGrid::new(grid.clone(), values, label)?;
        d.validate()?;
        Ok(d)
    }
}

/// Complex scalar helper.
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}
