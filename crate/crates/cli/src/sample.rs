//! Seeded Gaussian demonstration sampler for the observed increment
//! sequence. Not used by any accuracy check.

use gmfilter::{FilterContext, FrequencyGrid};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::config::{RunConfig, NOISE, SIGNAL};
use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct SampleTable {
    pub seed: u64,
    /// One row per time step, `T` coordinates each.
    pub rows: Vec<Vec<f64>>,
    /// Lag-0 covariance implied by the truncated factor.
    pub model_cov0: Vec<Vec<f64>>,
    /// Empirical lag-0 covariance; absent for an empty path.
    pub empirical_cov0: Option<Vec<Vec<f64>>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Draws `x(m) = sum_k Theta(k) eps(m - k)` with i.i.d. standard normal
/// `eps`, where `Theta` is the truncated canonical factor of the weighted
/// observed density.
pub fn demo_sample(config: &RunConfig, seed: u64, length: usize) -> Result<SampleTable, CliError> {
    let grid = FrequencyGrid::new(config.grid.size).map_err(|e| CliError::Config(format!("`grid.size`: {e}")))?;
    let f = config.density(SIGNAL, &grid)?;
    let g = config.density(NOISE, &grid)?;
    let ctx = FilterContext::new(&config.increment, &f, &g, config.truncation.l).map_err(CliError::core("factorization"))?;
    let theta: Vec<DMatrix<f64>> = ctx.theta.series.coeffs.iter().map(|c| c.map(|z| z.re)).collect();
    let t = config.dim();
    let lags = theta.len();

    let model = theta.iter().fold(DMatrix::zeros(t, t), |acc, th| acc + th * th.transpose());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = if length == 0 { 0 } else { length + lags - 1 };
    let noise: Vec<DVector<f64>> =
        (0..total).map(|_| DVector::from_fn(t, |_, _| StandardNormal.sample(&mut rng))).collect();

    let mut rows = Vec::with_capacity(length);
    let mut cov = DMatrix::zeros(t, t);
    for m in 0..length {
        let now = m + lags - 1;
        let x = theta.iter().enumerate().fold(DVector::zeros(t), |acc, (k, th)| acc + th * &noise[now - k]);
        cov += &x * x.transpose();
        rows.push(x.iter().copied().collect());
    }
    let empirical = (length > 0).then(|| rows_of(&(cov / length as f64)));
    Ok(SampleTable { seed, rows, model_cov0: rows_of(&model), empirical_cov0: empirical })
}

impl SampleTable {
    pub fn to_csv(&self) -> Result<String, CliError> {
        let dim = self.model_cov0.len();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["m".to_string()];
        header.extend((0..dim).map(|p| format!("x_{p}")));
        w.write_record(&header).map_err(|e| CliError::Output(e.to_string()))?;
        for (m, row) in self.rows.iter().enumerate() {
            let mut rec = vec![m.to_string()];
            rec.extend(row.iter().map(|x| x.to_string()));
            w.write_record(&rec).map_err(|e| CliError::Output(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Output(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Output(e.to_string()))
    }
}
