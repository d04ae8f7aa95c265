//! Generalized multiple increment operators and periodic blocking.
//!
//! The operator is `chi(B) = prod_i (1 - B^{mu_i s_i})^{d_i}`, expanded into
//! exact integer coefficients `e(0..n)` with `n = sum mu_i s_i d_i`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Seasonal increment pattern `(mu, s, d)` together with the period `T`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncrementSpec {
    pub mu: Vec<u32>,
    pub s: Vec<u32>,
    pub d: Vec<u32>,
    #[serde(default = "one", rename = "t")]
    pub period: usize,
}

fn one() -> usize {
    1
}

impl IncrementSpec {
    pub fn new(mu: Vec<u32>, s: Vec<u32>, d: Vec<u32>, period: usize) -> Result<Self> {
        let spec = IncrementSpec { mu, s, d, period };
        spec.validate()?;
        Ok(spec)
    }

    /// Single-pattern spec with period 1.
    pub fn simple(mu: u32, s: u32, d: u32) -> Self {
        IncrementSpec { mu: vec![mu], s: vec![s], d: vec![d], period: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.mu.len();
        if r == 0 {
            return Err(Error::InvalidSpec("at least one seasonal pattern is required".into()));
        }
        if self.s.len() != r || self.d.len() != r {
            return Err(Error::InvalidSpec(format!(
                "mu, s, d must have equal length (got {}, {}, {})",
                r,
                self.s.len(),
                self.d.len()
            )));
        }
        for (name, v) in [("mu", &self.mu), ("s", &self.s), ("d", &self.d)] {
            if let Some(pos) = v.iter().position(|&x| x == 0) {
                return Err(Error::InvalidSpec(format!("{name}[{pos}] must be a positive integer")));
            }
        }
        if self.period == 0 {
            return Err(Error::InvalidSpec("period T must be positive".into()));
        }
        Ok(())
    }

    pub fn patterns(&self) -> usize {
        self.mu.len()
    }

    /// `n(gamma) = sum mu_i s_i d_i`.
    pub fn n_gamma(&self) -> usize {
        self.mu
            .iter()
            .zip(&self.s)
            .zip(&self.d)
            .map(|((&m, &s), &d)| m as usize * s as usize * d as usize)
            .sum()
    }

    /// Total differencing order `sum d_i`.
    pub fn total_order(&self) -> u32 {
        self.d.iter().sum()
    }
}

/// Coefficients `e(0..=n)` of the expanded increment operator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IncrementPolynomial {
    pub coeffs: Vec<i64>,
}

impl IncrementPolynomial {
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Coefficients as floats, convenient for the numerical modules.
    pub fn as_f64(&self) -> Vec<f64> {
        self.coeffs.iter().map(|&c| c as f64).collect()
    }
}

fn binomial(n: u32, k: u32) -> Option<i64> {
    let k = k.min(n - k);
    let mut acc: i128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as i128 / (i + 1) as i128;
        if acc > i64::MAX as i128 {
            return None;
        }
    }
    Some(acc as i64)
}

/// Expands `prod_i (1 - B^{mu_i s_i})^{d_i}` by convolving the binomial
/// expansions of each pattern, left to right.
pub fn expand_increment_operator(spec: &IncrementSpec) -> Result<IncrementPolynomial> {
    spec.validate()?;
    let mut acc: Vec<i64> = vec![1];
    for (i, ((&m, &s), &d)) in spec.mu.iter().zip(&spec.s).zip(&spec.d).enumerate() {
        let step = m as usize * s as usize;
        let overflow = || Error::CoefficientOverflow { pattern: i, order: d };
        let mut factor = vec![0i64; step * d as usize + 1];
        for l in 0..=d {
            let b = binomial(d, l).ok_or_else(overflow)?;
            factor[l as usize * step] = if l % 2 == 0 { b } else { -b };
        }
        let mut next = vec![0i64; acc.len() + factor.len() - 1];
        for (a, &x) in acc.iter().enumerate() {
            if x == 0 {
                continue;
            }
            for (b, &y) in factor.iter().enumerate() {
                if y == 0 {
                    continue;
                }
                let prod = x.checked_mul(y).ok_or_else(overflow)?;
                next[a + b] = next[a + b].checked_add(prod).ok_or_else(overflow)?;
            }
        }
        acc = next;
    }
    Ok(IncrementPolynomial { coeffs: acc })
}

/// A vector-valued sequence defined on consecutive integer indices
/// `start, start+1, ...`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexedSeries {
    pub start: i64,
    pub values: Vec<DVector<f64>>,
}

impl IndexedSeries {
    pub fn new(start: i64, values: Vec<DVector<f64>>) -> Self {
        IndexedSeries { start, values }
    }

    pub fn from_scalars(start: i64, xs: &[f64]) -> Self {
        IndexedSeries { start, values: xs.iter().map(|&x| DVector::from_element(1, x)).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn end(&self) -> i64 {
        self.start + self.values.len() as i64
    }

    pub fn get(&self, m: i64) -> Option<&DVector<f64>> {
        if m < self.start {
            return None;
        }
        self.values.get((m - self.start) as usize)
    }
}

/// Applies the increment operator: `out(m) = sum_k e(k) x(m - k)` for every
/// `m` whose full history `m - n .. m` lies inside the input.
pub fn apply_increment(series: &IndexedSeries, spec: &IncrementSpec) -> Result<IndexedSeries> {
    let e = expand_increment_operator(spec)?;
    let n = e.degree();
    let first = series.start + n as i64;
    if series.len() <= n {
        return Err(Error::InsufficientHistory { first_computable: first });
    }
    let dim = series.values[0].len();
    let values = (n..series.len())
        .map(|j| {
            let mut acc = DVector::zeros(dim);
            for (k, &c) in e.coeffs.iter().enumerate() {
                if c != 0 {
                    acc.axpy(c as f64, &series.values[j - k], 1.0);
                }
            }
            acc
        })
        .collect();
    Ok(IndexedSeries { start: first, values })
}

/// Blocks a scalar series into `T`-vectors: `x_p(m) = x(mT + p)`, zero-based
/// `p`. Only whole blocks are kept; `start` must be a multiple of `T`.
pub fn block_sequence(scalar: &[f64], start: i64, period: usize) -> Result<IndexedSeries> {
    if period == 0 {
        return Err(Error::InvalidSpec("period T must be positive".into()));
    }
    let t = period as i64;
    if start.rem_euclid(t) != 0 {
        return Err(Error::DimensionMismatch(format!(
            "block start {start} is not aligned to period {period}"
        )));
    }
    let blocks = scalar.len() / period;
    let values = (0..blocks)
        .map(|b| DVector::from_column_slice(&scalar[b * period..(b + 1) * period]))
        .collect();
    Ok(IndexedSeries { start: start.div_euclid(t), values })
}

/// Inverse of [`block_sequence`]: returns the scalar start index and values.
pub fn unblock_sequence(blocked: &IndexedSeries) -> (i64, Vec<f64>) {
    let t = blocked.values.first().map_or(1, |v| v.len());
    let values = blocked.values.iter().flat_map(|v| v.iter().copied()).collect();
    (blocked.start * t as i64, values)
}

/// Lifts scalar weights `a(0..=M)` to `T`-vector weights `a_p(m) = a(mT + p)`
/// on `m = 0..=M/T`, padding the last block with zeros.
pub fn lift_functional(scalar: &[f64], period: usize) -> Result<Vec<DVector<f64>>> {
    if period == 0 {
        return Err(Error::InvalidSpec("period T must be positive".into()));
    }
    if scalar.is_empty() {
        return Err(Error::InvalidSpec("functional weights must be non-empty".into()));
    }
    let m_max = scalar.len() - 1;
    let n = m_max / period;
    Ok((0..=n)
        .map(|m| {
            DVector::from_fn(period, |p, _| scalar.get(m * period + p).copied().unwrap_or(0.0))
        })
        .collect())
}

/// Maps a scalar index `M` to block coordinates `(N, p)` with zero-based `p`.
pub fn scalar_to_block_index(m: usize, period: usize) -> (usize, usize) {
    (m / period, m % period)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(mu: &[u32], s: &[u32], d: &[u32]) -> IncrementSpec {
        IncrementSpec::new(mu.to_vec(), s.to_vec(), d.to_vec(), 1).unwrap()
    }

    #[test]
    fn first_difference() {
        let e = expand_increment_operator(&spec(&[1], &[1], &[1])).unwrap();
        assert_eq!(e.coeffs, vec![1, -1]);
    }

    #[test]
    fn seasonal_lag_six() {
        let e = expand_increment_operator(&spec(&[2], &[3], &[1])).unwrap();
        assert_eq!(e.coeffs, vec![1, 0, 0, 0, 0, 0, -1]);
    }

    #[test]
    fn two_patterns() {
        let e = expand_increment_operator(&spec(&[1, 1], &[1, 2], &[1, 1])).unwrap();
        assert_eq!(e.coeffs, vec![1, -1, -1, 1]);
    }

    #[test]
    fn second_difference() {
        let e = expand_increment_operator(&spec(&[1], &[1], &[2])).unwrap();
        assert_eq!(e.coeffs, vec![1, -2, 1]);
    }

    #[test]
    fn overflow_is_reported() {
        let err = expand_increment_operator(&spec(&[1], &[1], &[80])).unwrap_err();
        assert!(matches!(err, Error::CoefficientOverflow { .. }));
    }

    #[test]
    fn rejects_zero_entries() {
        assert!(IncrementSpec::new(vec![0], vec![1], vec![1], 1).is_err());
        assert!(IncrementSpec::new(vec![1], vec![1], vec![1, 2], 1).is_err());
    }

    #[test]
    fn constants_are_annihilated() {
        let x = IndexedSeries::from_scalars(-10, &[3.5; 20]);
        let y = apply_increment(&x, &spec(&[1, 2], &[2, 1], &[1, 2])).unwrap();
        assert!(y.values.iter().all(|v| v[0] == 0.0));
    }

    #[test]
    fn difference_of_ramp() {
        let xs: Vec<f64> = (0..10).map(|m| m as f64).collect();
        let y = apply_increment(&IndexedSeries::from_scalars(0, &xs), &spec(&[1], &[1], &[1])).unwrap();
        assert_eq!(y.start, 1);
        assert!(y.values.iter().all(|v| v[0] == 1.0));
    }

    #[test]
    fn impulse_response() {
        let mut xs = vec![0.0; 10];
        xs[3] = 1.0;
        let y = apply_increment(&IndexedSeries::from_scalars(-3, &xs), &spec(&[1, 1], &[1, 2], &[1, 1])).unwrap();
        let at = |m: i64| y.get(m).unwrap()[0];
        assert_eq!([at(0), at(1), at(2), at(3)], [1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn short_history_names_first_index() {
        let x = IndexedSeries::from_scalars(5, &[1.0, 2.0]);
        match apply_increment(&x, &spec(&[1], &[2], &[1])) {
            Err(Error::InsufficientHistory { first_computable }) => assert_eq!(first_computable, 7),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn blocking() {
        let xs: Vec<f64> = (0..8).map(|k| k as f64).collect();
        let b = block_sequence(&xs, 0, 2).unwrap();
        assert_eq!(b.values[3].as_slice(), &[6.0, 7.0]);
        assert_eq!(unblock_sequence(&b), (0, xs.clone()));
        let id = block_sequence(&xs, 0, 1).unwrap();
        assert_eq!(unblock_sequence(&id).1, xs);
    }

    #[test]
    fn lifting_pads_last_block() {
        let a = lift_functional(&[1.0, 2.0, 3.0], 2).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[0].as_slice(), &[1.0, 2.0]);
        assert_eq!(a[1].as_slice(), &[3.0, 0.0]);
        let b = lift_functional(&[5.0, 7.0], 3).unwrap();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].as_slice(), &[5.0, 7.0, 0.0]);
        assert_eq!(scalar_to_block_index(5, 2), (2, 1));
    }
}
