use std::collections::BTreeMap;
use std::fmt::Write as _;

use gmfilter::factorization::FactorDiagnostics;
use gmfilter::{MembershipReport, MinimalityReport, SaddleReport};
use gmfilter::minimax::SubgradientReport;
use serde::Serialize;

use crate::config::Task;
use crate::error::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct FactorSection {
    pub theta: FactorDiagnostics,
    pub phi: FactorDiagnostics,
    /// Max coefficient of `Psi * Theta - I` over the truncation.
    pub inverse_identity_residual: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct OracleRow {
    pub w_obs: usize,
    pub delta: f64,
}

/// One grid node of the spectral characteristic.
#[derive(Debug, Clone, Serialize)]
pub struct HRow {
    pub lambda: f64,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MinimaxSection {
    pub signal_family: String,
    pub noise_family: String,
    pub grid_size: usize,
    pub delta0: f64,
    /// Certified upper bound of `sup Delta(h0; f, g) - Delta0` over the classes.
    pub gap: f64,
    pub iterations: usize,
    pub delta_cross: f64,
    pub signal_membership: MembershipReport,
    pub noise_membership: MembershipReport,
    pub saddle: SaddleReport,
    pub subgradient: SubgradientReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub task: Task,
    /// SHA-256 of the canonical JSON form of the effective config.
    pub config_digest: String,
    pub n_gamma: usize,
    pub e_gamma: Vec<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_size: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minimality: Option<MinimalityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factorization: Option<FactorSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_fact: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_fourier: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fourier_window: Option<usize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub delta_oracle: Vec<OracleRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub h_table: Vec<HRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minimax: Option<MinimaxSection>,
    /// Tolerances the warnings are checked against.
    pub tolerances: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

fn finite(name: &str, x: f64) -> Result<(), CliError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(CliError::NonFinite(name.into()))
    }
}

impl RunReport {
    pub fn check_finite(&self) -> Result<(), CliError> {
        for (name, v) in [("delta_fact", self.delta_fact), ("delta_fourier", self.delta_fourier)] {
            if let Some(x) = v {
                finite(name, x)?;
            }
        }
        for r in &self.delta_oracle {
            finite("delta_oracle", r.delta)?;
        }
        if let Some(m) = &self.minimality {
            m.values.iter().try_for_each(|&x| finite("minimality", x))?;
        }
        if let Some(fs) = &self.factorization {
            finite("factorization.theta", fs.theta.grid_residual)?;
            finite("factorization.phi", fs.phi.grid_residual)?;
            finite("factorization.inverse_identity_residual", fs.inverse_identity_residual)?;
        }
        for row in &self.h_table {
            row.re.iter().chain(&row.im).try_for_each(|&x| finite("h_table", x))?;
        }
        if let Some(m) = &self.minimax {
            finite("minimax.delta0", m.delta0)?;
            finite("minimax.gap", m.gap)?;
            finite("minimax.delta_cross", m.delta_cross)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Spectral characteristic as CSV: `lambda, re_0, im_0, re_1, ...`.
    pub fn h_csv(&self) -> Result<String, CliError> {
        let dim = self.h_table.first().map_or(0, |r| r.re.len());
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["lambda".to_string()];
        for p in 0..dim {
            header.push(format!("re_{p}"));
            header.push(format!("im_{p}"));
        }
        w.write_record(&header).map_err(|e| CliError::Output(e.to_string()))?;
        for row in &self.h_table {
            let mut rec = vec![row.lambda.to_string()];
            for p in 0..dim {
                rec.push(row.re[p].to_string());
                rec.push(row.im[p].to_string());
            }
            w.write_record(&rec).map_err(|e| CliError::Output(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::Output(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CliError::Output(e.to_string()))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "task            {:?}", self.task);
        let _ = writeln!(s, "config digest   {}", self.config_digest);
        let _ = writeln!(s, "n_gamma         {}", self.n_gamma);
        let _ = writeln!(s, "e_gamma         {:?}", self.e_gamma);
        if let Some(m) = &self.minimality {
            let _ = writeln!(s, "minimality      {:?} suspect={}", m.values, m.suspect);
        }
        if let Some(f) = &self.factorization {
            let _ = writeln!(
                s,
                "factor theta    {:?} iterations={} residual={:.3e}",
                f.theta.method, f.theta.iterations, f.theta.grid_residual
            );
            let _ = writeln!(
                s,
                "factor phi      {:?} iterations={} residual={:.3e}",
                f.phi.method, f.phi.iterations, f.phi.grid_residual
            );
            let _ = writeln!(s, "psi theta - I   {:.3e}", f.inverse_identity_residual);
        }
        if let Some(d) = self.delta_fact {
            let _ = writeln!(s, "delta_fact      {d:.12}");
        }
        if let Some(d) = self.delta_fourier {
            let _ = writeln!(s, "delta_fourier   {d:.12}");
        }
        for r in &self.delta_oracle {
            let _ = writeln!(s, "delta_oracle    W={:<5} {:.12}", r.w_obs, r.delta);
        }
        if let Some(m) = &self.minimax {
            let _ = writeln!(s, "minimax         {} x {}", m.signal_family, m.noise_family);
            let _ = writeln!(s, "  delta0        {:.12}", m.delta0);
            let _ = writeln!(s, "  gap           {:.3e}", m.gap);
            let _ = writeln!(s, "  delta_cross   {:.12}", m.delta_cross);
            if let Some(r) = m.saddle.right_margin {
                let _ = writeln!(s, "  right margin  {r:.3e} ({} samples, seed {})", m.saddle.samples, m.saddle.seed);
            }
            if let Some(l) = m.saddle.left_margin {
                let _ = writeln!(s, "  left margin   {l:.3e}");
            }
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}
