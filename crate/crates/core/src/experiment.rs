//! End-to-end forecasting runs: simulate, prepare, train, evaluate.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::evaluator::{evaluate, EvalError, EvalReport};
use crate::lstm::{LstmConfig, LstmModel};
use crate::map::{iterate, MapError, MapParams, ScaledDrive};
use crate::pipeline::{Dataset, PipelineError, PrepareConfig};
use crate::scalar::Scalar;
use crate::trainer::{train, LossHistory, TrainConfig, TrainError};

/// The four parameter pairs whose attractors are forecast.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    C1a,
    C1b,
    C2a,
    C2b,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::C1a, Preset::C1b, Preset::C2a, Preset::C2b];

    /// `(alpha, eps_prime)`.
    pub fn params(self) -> (f64, f64) {
        match self {
            Preset::C1a => (3.6, 0.5),
            Preset::C1b => (3.9, 1.0),
            Preset::C2a => (3.0, 1.0),
            Preset::C2b => (3.1, 0.8),
        }
    }

    pub fn regime(self) -> &'static str {
        match self {
            Preset::C1a | Preset::C1b => "C1",
            Preset::C2a | Preset::C2b => "C2",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::C1a => "c1a",
            Preset::C1b => "c1b",
            Preset::C2a => "c2a",
            Preset::C2b => "c2b",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown preset `{s}` (expected c1a, c1b, c2a or c2b)"))
    }
}

/// Map settings of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimulationConfig {
    pub alpha: f64,
    pub epsilon: f64,
    pub omega: f64,
    pub x0: f64,
    pub phi0: f64,
    pub n: usize,
    pub burn_in: usize,
}

pub const DEFAULT_X0: f64 = 0.3;
pub const DEFAULT_PHI0: f64 = 0.0;
pub const DEFAULT_BURN_IN: usize = 1000;
pub const DEFAULT_N: usize = 100_000;

impl SimulationConfig {
    /// Default orbit settings for `(alpha, eps_prime)`.
    pub fn from_prime(alpha: f64, eps_prime: f64) -> Result<Self, MapError> {
        let p = MapParams::<f64>::from_drive(alpha, ScaledDrive::new(eps_prime)?)?;
        Ok(Self {
            alpha: p.alpha,
            epsilon: p.epsilon,
            omega: p.omega,
            x0: DEFAULT_X0,
            phi0: DEFAULT_PHI0,
            n: DEFAULT_N,
            burn_in: DEFAULT_BURN_IN,
        })
    }

    pub fn preset(p: Preset) -> Self {
        let (a, e) = p.params();
        Self::from_prime(a, e).expect("presets are valid")
    }

    pub fn map_params<T: Scalar>(&self) -> Result<MapParams<T>, MapError> {
        MapParams::with_omega(T::lit(self.alpha), T::lit(self.epsilon), T::lit(self.omega))
    }

    /// ε′ when defined (α < 4).
    pub fn eps_prime(&self) -> Option<f64> {
        crate::map::prime_from_epsilon(self.alpha, self.epsilon).ok()
    }

    pub fn simulate<T: Scalar>(&self) -> Result<Vec<T>, MapError> {
        let p = self.map_params::<T>()?;
        Ok(iterate(&p, T::lit(self.x0), T::lit(self.phi0), self.n, self.burn_in)?.x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentConfig {
    pub label: &'static str,
    pub simulation: SimulationConfig,
    pub prepare: PrepareConfig,
    pub num_layers: usize,
    pub units: usize,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    /// Defaults for a preset: 2×16 units, W = 1, H = 1, 60/40 split.
    pub fn preset(p: Preset) -> Self {
        Self {
            label: p.name(),
            simulation: SimulationConfig::preset(p),
            prepare: PrepareConfig::default(),
            num_layers: 2,
            units: 16,
            train: TrainConfig::default(),
        }
    }

    pub fn lstm(&self) -> LstmConfig {
        LstmConfig {
            num_layers: self.num_layers,
            units: self.units,
            input_dim: 1,
            output_dim: self.prepare.horizon,
            window: self.prepare.window,
        }
    }

    pub fn regime(&self) -> &'static str {
        self.label
            .parse::<Preset>()
            .map(Preset::regime)
            .unwrap_or("custom")
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("simulate: {0}")]
    Simulate(#[from] MapError),
    #[error("prepare: {0}")]
    Prepare(#[from] PipelineError),
    #[error("train: {0}")]
    Train(String),
    #[error("evaluate: {0}")]
    Evaluate(#[from] EvalError),
}

impl<T: Scalar> From<TrainError<T>> for ExperimentError {
    fn from(e: TrainError<T>) -> Self {
        ExperimentError::Train(e.to_string())
    }
}

pub struct ExperimentOutcome<T> {
    pub series: Vec<T>,
    pub dataset: Dataset<T>,
    pub model: LstmModel<T>,
    pub history: LossHistory<T>,
    pub report: EvalReport<T>,
}

/// Machine-readable record of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub regime: String,
    pub preset: String,
    pub alpha: f64,
    pub eps_prime: Option<f64>,
    #[serde(rename = "W")]
    pub window: usize,
    #[serde(rename = "H")]
    pub horizon: usize,
    pub units: usize,
    pub seed: u64,
    pub rmse: f64,
    pub per_step_rmse: Vec<f64>,
}

impl RunSummary {
    pub fn new<T: Scalar>(cfg: &ExperimentConfig, report: &EvalReport<T>) -> Self {
        let f = |v: T| v.to_f64().unwrap_or(f64::NAN);
        Self {
            regime: cfg.regime().into(),
            preset: cfg.label.into(),
            alpha: cfg.simulation.alpha,
            eps_prime: cfg.simulation.eps_prime(),
            window: cfg.prepare.window,
            horizon: cfg.prepare.horizon,
            units: cfg.units,
            seed: cfg.train.seed,
            rmse: f(report.rmse),
            per_step_rmse: report.per_step_rmse.iter().map(|&v| f(v)).collect(),
        }
    }
}

pub fn prepare_dataset<T: Scalar>(
    cfg: &ExperimentConfig,
) -> Result<(Vec<T>, Dataset<T>), ExperimentError> {
    let series = cfg.simulation.simulate::<T>()?;
    let dataset = Dataset::prepare(&series, &cfg.prepare)?;
    Ok((series, dataset))
}

pub fn run_experiment<T: Scalar>(
    cfg: &ExperimentConfig,
) -> Result<ExperimentOutcome<T>, ExperimentError> {
    let (series, dataset) = prepare_dataset::<T>(cfg)?;
    let (model, history) = train(&dataset.train, &cfg.lstm(), &cfg.train)?;
    let mut report = evaluate(&model, &dataset.scaler, &dataset.test)?;
    report.regime = cfg.regime().into();
    report.alpha = Some(T::lit(cfg.simulation.alpha));
    report.eps_prime = cfg.simulation.eps_prime().map(T::lit);
    Ok(ExperimentOutcome {
        series,
        dataset,
        model,
        history,
        report,
    })
}
