//! JSON run configuration. All keys are lowercase snake case.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gmfilter::{
    BallRadius, CMatrix, Contamination, DensitySpec, FrequencyGrid, IncrementSpec, MatrixDensityGrid, MatrixInput,
    MomentConstraint, NoiseClass, SignalClass, SolverSettings,
};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Name of the signal density in `densities`.
pub const SIGNAL: &str = "f";
/// Name of the noise density in `densities`.
pub const NOISE: &str = "g";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Expand,
    Factorize,
    Filter,
    Oracle,
    Minimax,
    Report,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Text,
    Csv,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_grid")]
    pub size: usize,
}

fn default_grid() -> usize {
    gmfilter::DEFAULT_GRID_SIZE
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { size: default_grid() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationConfig {
    /// Length of the truncated factor series.
    #[serde(default = "default_l")]
    pub l: usize,
    /// Window of the Fourier-coefficient system; `None` picks it from the
    /// functional support.
    #[serde(default)]
    pub k: Option<usize>,
    /// Observation windows of the projection oracle.
    #[serde(default = "default_w_obs")]
    pub w_obs: Vec<usize>,
}

fn default_l() -> usize {
    256
}

fn default_w_obs() -> Vec<usize> {
    vec![32, 64, 128, 256]
}

impl Default for TruncationConfig {
    fn default() -> Self {
        TruncationConfig { l: default_l(), k: None, w_obs: default_w_obs() }
    }
}

/// Functional weights. `scalar` weights are lifted to period-`T` blocks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalConfig {
    Scalar(Vec<f64>),
    Vector(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MomentConfig {
    Matrix { value: MatrixInput },
    Trace { value: f64 },
    Diagonal { values: Vec<f64> },
    Weighted { b: MatrixInput, p: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContaminationConfig {
    /// Density name of the floor `f1`.
    pub f1: String,
    pub eps: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalClassConfig {
    pub moment: MomentConfig,
    #[serde(default)]
    pub contamination: Option<ContaminationConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadiusConfig {
    Entrywise { values: Vec<Vec<f64>> },
    Trace { delta: f64 },
    Diagonal { deltas: Vec<f64> },
    Weighted { b: MatrixInput, delta: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseClassConfig {
    /// Ball of the given radius around the named density.
    Ball { g1: String, radius: RadiusConfig },
    /// Noise density known exactly (semi-uncertain problem).
    Known { density: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimaxConfig {
    pub signal: SignalClassConfig,
    pub noise: NoiseClassConfig,
    #[serde(default)]
    pub settings: SolverSettings,
    /// Grid used by the solver; defaults to `grid.size`.
    #[serde(default)]
    pub grid_size: Option<usize>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_samples() -> usize {
    100
}

fn default_seed() -> u64 {
    7
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub increment: IncrementSpec,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub truncation: TruncationConfig,
    #[serde(default)]
    pub densities: BTreeMap<String, DensitySpec>,
    #[serde(default)]
    pub functional: Option<FunctionalConfig>,
    #[serde(default)]
    pub task: Option<Task>,
    #[serde(default)]
    pub minimax: Option<MinimaxConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })?;
        Self::from_json(&text)
    }

    pub fn dim(&self) -> usize {
        self.increment.period
    }

    pub fn density_spec(&self, name: &str) -> Result<&DensitySpec, CliError> {
        self.densities
            .get(name)
            .ok_or_else(|| CliError::Config(format!("missing density `densities.{name}`")))
    }

    /// Evaluates a named density on `grid`.
    pub fn density(&self, name: &str, grid: &FrequencyGrid) -> Result<MatrixDensityGrid, CliError> {
        let spec = self.density_spec(name)?;
        let transfer = gmfilter::TransferGrid::new(&self.increment, grid).map_err(CliError::core("spectral"))?;
        let label = if name == NOISE { gmfilter::DensityLabel::G } else { gmfilter::DensityLabel::F };
        spec.evaluate(grid, self.dim(), &transfer, label).map_err(CliError::core("spectral"))
    }

    /// Functional weights as `T`-vectors.
    pub fn weights(&self) -> Result<Vec<DVector<f64>>, CliError> {
        let t = self.dim();
        match &self.functional {
            None => Err(CliError::Config("missing key `functional`".into())),
            Some(FunctionalConfig::Scalar(a)) => {
                gmfilter::increment::lift_functional(a, t).map_err(CliError::core("increment"))
            }
            Some(FunctionalConfig::Vector(rows)) => {
                if rows.is_empty() {
                    return Err(CliError::Config("`functional.vector` is empty".into()));
                }
                rows.iter()
                    .enumerate()
                    .map(|(m, r)| {
                        if r.len() == t {
                            Ok(DVector::from_column_slice(r))
                        } else {
                            Err(CliError::Config(format!("`functional.vector[{m}]` has {} entries, expected T = {t}", r.len())))
                        }
                    })
                    .collect()
            }
        }
    }

    pub fn minimax(&self) -> Result<&MinimaxConfig, CliError> {
        self.minimax.as_ref().ok_or_else(|| CliError::Config("missing key `minimax`".into()))
    }
}

fn matrix(input: &MatrixInput, dim: usize, key: &str) -> Result<CMatrix, CliError> {
    input.to_matrix(dim).map_err(|e| CliError::Config(format!("`{key}`: {e}")))
}

impl MomentConfig {
    pub fn build(&self, dim: usize) -> Result<MomentConstraint, CliError> {
        Ok(match self {
            MomentConfig::Matrix { value } => MomentConstraint::Matrix(matrix(value, dim, "minimax.signal.moment.value")?),
            MomentConfig::Trace { value } => MomentConstraint::Trace(*value),
            MomentConfig::Diagonal { values } => MomentConstraint::Diagonal(values.clone()),
            MomentConfig::Weighted { b, p } => {
                MomentConstraint::Weighted { b: matrix(b, dim, "minimax.signal.moment.b")?, p: *p }
            }
        })
    }
}

impl RadiusConfig {
    pub fn build(&self, dim: usize) -> Result<BallRadius, CliError> {
        Ok(match self {
            RadiusConfig::Entrywise { values } => {
                if values.len() != dim || values.iter().any(|r| r.len() != dim) {
                    return Err(CliError::Config(format!("`minimax.noise.radius.values` must be {dim} x {dim}")));
                }
                BallRadius::Entrywise(DMatrix::from_fn(dim, dim, |i, j| values[i][j]))
            }
            RadiusConfig::Trace { delta } => BallRadius::Trace(*delta),
            RadiusConfig::Diagonal { deltas } => BallRadius::Diagonal(deltas.clone()),
            RadiusConfig::Weighted { b, delta } => {
                BallRadius::Weighted { b: matrix(b, dim, "minimax.noise.radius.b")?, delta: *delta }
            }
        })
    }
}

impl SignalClassConfig {
    pub fn build(&self, config: &RunConfig, grid: &FrequencyGrid) -> Result<SignalClass, CliError> {
        let moment = self.moment.build(config.dim())?;
        Ok(match &self.contamination {
            None => SignalClass::d0(moment),
            Some(c) => SignalClass {
                moment,
                contamination: Some(Contamination { f1: config.density(&c.f1, grid)?, eps: c.eps }),
            },
        })
    }
}

impl NoiseClassConfig {
    pub fn build_ball(&self, config: &RunConfig, grid: &FrequencyGrid) -> Result<Option<NoiseClass>, CliError> {
        match self {
            NoiseClassConfig::Ball { g1, radius } => {
                Ok(Some(NoiseClass { g1: config.density(g1, grid)?, radius: radius.build(config.dim())? }))
            }
            NoiseClassConfig::Known { .. } => Ok(None),
        }
    }
}
