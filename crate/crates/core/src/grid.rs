//! Offset frequency grid and FFT-backed Fourier coefficient helpers.
//!
//! Nodes are `lambda_j = -pi + (j + 1/2) 2 pi / N`. A function on the grid is
//! read as `F(lambda) = sum_k c(k) e^{-i lambda k}` with coefficients given by
//! the rectangle rule `c(k) = (1/N) sum_j F(lambda_j) e^{i lambda_j k}`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

/// Default number of grid nodes.
pub const DEFAULT_GRID_SIZE: usize = 4096;

#[derive(Clone)]
pub struct FrequencyGrid {
    size: usize,
    nodes: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for FrequencyGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrequencyGrid").field("size", &self.size).finish()
    }
}

impl PartialEq for FrequencyGrid {
    fn eq(&self, other: &Self) -> bool {
        self.size == other.size
    }
}

impl FrequencyGrid {
    pub fn new(size: usize) -> Result<Self> {
        if size < 8 || !size.is_power_of_two() {
            return Err(Error::InvalidGrid(size));
        }
        let step = 2.0 * PI / size as f64;
        let nodes = (0..size).map(|j| -PI + (j as f64 + 0.5) * step).collect();
        let mut planner = FftPlanner::new();
        Ok(FrequencyGrid {
            size,
            nodes,
            forward: planner.plan_fft_forward(size),
            inverse: planner.plan_fft_inverse(size),
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn node(&self, j: usize) -> f64 {
        self.nodes[j]
    }

    /// Index of the node at `-lambda_j`.
    pub fn mirror(&self, j: usize) -> usize {
        self.size - 1 - j
    }

    fn theta0(&self) -> f64 {
        -PI + PI / self.size as f64
    }

    /// Quadrature `(1/2pi) int F` over the grid.
    pub fn mean<T>(&self, values: impl IntoIterator<Item = T>) -> T
    where
        T: std::iter::Sum<T> + std::ops::Div<f64, Output = T>,
    {
        values.into_iter().sum::<T>() / self.size as f64
    }

    /// Fourier coefficients `c(k)` for `k = k0 .. k0 + len` of scalar grid values.
    pub fn coefficients(&self, values: &[C64], k0: i64, len: usize) -> Vec<C64> {
        debug_assert_eq!(values.len(), self.size);
        let mut buf = values.to_vec();
        self.inverse.process(&mut buf);
        let n = self.size as i64;
        let th = self.theta0();
        (0..len as i64)
            .map(|i| {
                let k = k0 + i;
                buf[k.rem_euclid(n) as usize] * C64::from_polar(1.0 / n as f64, k as f64 * th)
            })
            .collect()
    }

    /// Grid values of `sum_k c(k) e^{-i lambda k}` for coefficients starting at `k0`.
    /// Any number of coefficients is accepted; wrapped terms are summed exactly.
    pub fn evaluate(&self, coeffs: &[C64], k0: i64) -> Vec<C64> {
        let n = self.size as i64;
        let th = self.theta0();
        let mut buf = vec![C64::new(0.0, 0.0); self.size];
        for (i, &c) in coeffs.iter().enumerate() {
            let k = k0 + i as i64;
            buf[k.rem_euclid(n) as usize] += c * C64::from_polar(1.0, -(k as f64) * th);
        }
        self.forward.process(&mut buf);
        buf
    }

    /// Causal projection of a scalar function: keeps coefficients `k > 0`
    /// and `zero_weight * c(0)`.
    pub fn causal_part(&self, values: &[C64], zero_weight: f64) -> Vec<C64> {
        let half = self.size / 2;
        let mut c = self.coefficients(values, 0, half);
        c[0] *= zero_weight;
        self.evaluate(&c, 0)
    }

    /// Half of a Hermitian split `H = P + P^*`: coefficients `0 < k < N/2`
    /// whole, `k = 0` and the Nyquist lag `k = N/2` halved. On this grid the
    /// Nyquist coefficient of a Hermitian function is anti-Hermitian, so the
    /// split is exact.
    pub fn split_part(&self, values: &[C64]) -> Vec<C64> {
        let half = self.size / 2;
        let mut c = self.coefficients(values, 0, half + 1);
        c[0] *= 0.5;
        c[half] *= 0.5;
        self.evaluate(&c, 0)
    }

    /// Matrix version of [`split_part`](Self::split_part) with the lag-zero
    /// coefficient split into its strictly lower triangle and half diagonal.
    pub fn matrix_split_part(&self, values: &[CMatrix]) -> Vec<CMatrix> {
        let half = self.size / 2;
        let mut c = self.matrix_coefficients(values, 0, half + 1);
        let t = c[0].nrows();
        for i in 0..t {
            for j in i..t {
                c[0][(i, j)] = if i == j { c[0][(i, j)] * 0.5 } else { C64::new(0.0, 0.0) };
            }
        }
        c[half] = c[half].scale(0.5);
        self.matrix_evaluate(&c, 0)
    }

    /// Entrywise Fourier coefficients of a matrix-valued grid function.
    pub fn matrix_coefficients(&self, values: &[CMatrix], k0: i64, len: usize) -> Vec<CMatrix> {
        let (r, c) = values[0].shape();
        let mut out = vec![CMatrix::zeros(r, c); len];
        let mut col = vec![C64::new(0.0, 0.0); self.size];
        for i in 0..r {
            for j in 0..c {
                for (slot, v) in col.iter_mut().zip(values) {
                    *slot = v[(i, j)];
                }
                for (o, x) in out.iter_mut().zip(self.coefficients(&col, k0, len)) {
                    o[(i, j)] = x;
                }
            }
        }
        out
    }

    /// Entrywise evaluation of a matrix coefficient sequence starting at `k0`.
    pub fn matrix_evaluate(&self, coeffs: &[CMatrix], k0: i64) -> Vec<CMatrix> {
        let (r, c) = coeffs[0].shape();
        let mut out = vec![CMatrix::zeros(r, c); self.size];
        let mut seq = vec![C64::new(0.0, 0.0); coeffs.len()];
        for i in 0..r {
            for j in 0..c {
                for (s, m) in seq.iter_mut().zip(coeffs) {
                    *s = m[(i, j)];
                }
                for (o, x) in out.iter_mut().zip(self.evaluate(&seq, k0)) {
                    o[(i, j)] = x;
                }
            }
        }
        out
    }

    /// Causal projection of a matrix function. At lag zero the strictly lower
    /// triangle is kept and the diagonal is multiplied by `diag_weight`.
    pub fn matrix_causal_part(&self, values: &[CMatrix], diag_weight: f64) -> Vec<CMatrix> {
        let half = self.size / 2;
        let mut c = self.matrix_coefficients(values, 0, half);
        let t = c[0].nrows();
        for i in 0..t {
            for j in 0..c[0].ncols() {
                if j > i {
                    c[0][(i, j)] = C64::new(0.0, 0.0);
                } else if i == j {
                    c[0][(i, j)] *= diag_weight;
                }
            }
        }
        self.matrix_evaluate(&c, 0)
    }

    /// Causal projection of a vector-valued function (lag 0 kept whole).
    pub fn vector_causal_part(&self, values: &[Vec<C64>]) -> Vec<Vec<C64>> {
        let dim = values[0].len();
        let mut out = vec![vec![C64::new(0.0, 0.0); dim]; self.size];
        let mut col = vec![C64::new(0.0, 0.0); self.size];
        for p in 0..dim {
            for (slot, v) in col.iter_mut().zip(values) {
                *slot = v[p];
            }
            for (o, x) in out.iter_mut().zip(self.causal_part(&col, 1.0)) {
                o[p] = x;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(FrequencyGrid::new(100).is_err());
        assert!(FrequencyGrid::new(4).is_err());
        assert!(FrequencyGrid::new(64).is_ok());
    }

    #[test]
    fn nodes_avoid_zero_and_are_increasing() {
        let g = FrequencyGrid::new(64).unwrap();
        assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
        assert!(g.nodes().iter().all(|&x| x.abs() > 1e-3 && (-PI..PI).contains(&x)));
        for j in 0..64 {
            assert!((g.node(g.mirror(j)) + g.node(j)).abs() < 1e-14);
        }
    }

    #[test]
    fn coefficients_of_trig_polynomial() {
        let g = FrequencyGrid::new(32).unwrap();
        let vals: Vec<C64> = g
            .nodes()
            .iter()
            .map(|&l| C64::new(2.0, 0.0) + C64::from_polar(0.5, -3.0 * l) - C64::from_polar(1.5, 5.0 * l))
            .collect();
        let c = g.coefficients(&vals, -8, 17);
        for (i, &x) in c.iter().enumerate() {
            let k = i as i64 - 8;
            let want = match k {
                0 => 2.0,
                3 => 0.5,
                -5 => -1.5,
                _ => 0.0,
            };
            assert!(close(x, C64::new(want, 0.0), 1e-13), "k={k} got {x}");
        }
        let back = g.evaluate(&c, -8);
        for (a, b) in back.iter().zip(&vals) {
            assert!(close(*a, *b, 1e-12));
        }
    }

    #[test]
    fn causal_part_drops_negative_lags() {
        let g = FrequencyGrid::new(64).unwrap();
        let vals: Vec<C64> =
            g.nodes().iter().map(|&l| C64::new(1.0, 0.0) + C64::from_polar(1.0, l) + C64::from_polar(1.0, -l)).collect();
        let p = g.causal_part(&vals, 0.5);
        for (v, &l) in p.iter().zip(g.nodes()) {
            assert!(close(*v, C64::new(0.5, 0.0) + C64::from_polar(1.0, -l), 1e-12));
        }
    }
}
