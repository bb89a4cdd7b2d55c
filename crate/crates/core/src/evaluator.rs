//! Test-set scoring in original units, scatter output, multi-step
//! evaluation and the layer-width sweep.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::lstm::{LstmConfig, LstmError, LstmModel};
use crate::pipeline::{Dataset, ScalerParams, SupervisedSet};
use crate::scalar::Scalar;
use crate::trainer::{train, TrainConfig};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("structural error: {0}")]
    Structure(String),
    #[error(transparent)]
    Model(#[from] LstmError),
    #[error("I/O: {0}")]
    Io(#[from] io::Error),
}

/// Root mean square difference.
pub fn rmse<T: Scalar>(pred: &[T], actual: &[T]) -> Result<T, EvalError> {
    if pred.len() != actual.len() || pred.is_empty() {
        return Err(EvalError::Structure(format!(
            "rmse needs equal non-empty lengths, got {} and {}",
            pred.len(),
            actual.len()
        )));
    }
    let sum: T = pred
        .iter()
        .zip(actual)
        .map(|(p, a)| (*p - *a) * (*p - *a))
        .sum();
    Ok((sum / T::from_count(pred.len())).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport<T> {
    pub regime: String,
    pub alpha: Option<T>,
    pub eps_prime: Option<T>,
    /// Over every forecast value of every sample.
    pub rmse: T,
    pub per_step_rmse: Vec<T>,
    /// `(actual, predicted)` in original units, one list per forecast step.
    #[serde(skip)]
    pub step_pairs: Vec<Vec<(T, T)>>,
    pub n_test: usize,
}

impl<T: Scalar> EvalReport<T> {
    /// One-step-ahead scatter pairs.
    pub fn pairs(&self) -> &[(T, T)] {
        &self.step_pairs[0]
    }

    pub fn horizon(&self) -> usize {
        self.per_step_rmse.len()
    }

    pub fn with_regime(mut self, regime: impl Into<String>, alpha: T, eps_prime: T) -> Self {
        self.regime = regime.into();
        self.alpha = Some(alpha);
        self.eps_prime = Some(eps_prime);
        self
    }

    /// Builds a report from unscaled per-step pairs.
    pub fn from_pairs(step_pairs: Vec<Vec<(T, T)>>) -> Result<Self, EvalError> {
        if step_pairs.is_empty() || step_pairs[0].is_empty() {
            return Err(EvalError::Structure("no predictions to score".into()));
        }
        let n = step_pairs[0].len();
        if step_pairs.iter().any(|p| p.len() != n) {
            return Err(EvalError::Structure(
                "forecast steps disagree in length".into(),
            ));
        }
        let per_step_rmse = step_pairs
            .iter()
            .map(|pairs| {
                let (a, p): (Vec<T>, Vec<T>) = pairs.iter().copied().unzip();
                rmse(&p, &a)
            })
            .collect::<Result<Vec<T>, _>>()?;
        let (a, p): (Vec<T>, Vec<T>) = step_pairs.iter().flatten().copied().unzip();
        Ok(Self {
            regime: String::new(),
            alpha: None,
            eps_prime: None,
            rmse: rmse(&p, &a)?,
            per_step_rmse,
            step_pairs,
            n_test: n,
        })
    }
}

fn check_shapes<T: Scalar>(model: &LstmModel<T>, test: &SupervisedSet<T>) -> Result<(), EvalError> {
    if test.is_empty() {
        return Err(EvalError::Structure("test set is empty".into()));
    }
    if test.window != model.config.window {
        return Err(EvalError::Structure(format!(
            "test windows have W={}, model expects W={}",
            test.window, model.config.window
        )));
    }
    Ok(())
}

/// Predicts every test window, maps predictions and targets back to
/// original units, then scores them.
pub fn evaluate<T: Scalar>(
    model: &LstmModel<T>,
    scaler: &ScalerParams<T>,
    test: &SupervisedSet<T>,
) -> Result<EvalReport<T>, EvalError> {
    check_shapes(model, test)?;
    if test.horizon != model.config.output_dim {
        return Err(EvalError::Structure(format!(
            "test targets have H={}, model emits {}",
            test.horizon, model.config.output_dim
        )));
    }
    let preds = test
        .inputs
        .par_iter()
        .map(|w| model.predict(w))
        .collect::<Result<Vec<_>, _>>()?;
    let step_pairs = (0..test.horizon)
        .map(|k| {
            preds
                .iter()
                .zip(&test.targets)
                .map(|(p, t)| (scaler.unscale(t[k]), scaler.unscale(p[k])))
                .collect()
        })
        .collect();
    EvalReport::from_pairs(step_pairs)
}

/// Per-step RMSE of a direct multi-output model.
pub fn multistep_eval<T: Scalar>(
    model: &LstmModel<T>,
    scaler: &ScalerParams<T>,
    test: &SupervisedSet<T>,
    horizon: usize,
) -> Result<Vec<T>, EvalError> {
    if horizon < 2 {
        return Err(EvalError::Structure(format!(
            "multi-step needs H >= 2, got {horizon}"
        )));
    }
    if test.horizon != horizon || model.config.output_dim != horizon {
        return Err(EvalError::Structure(format!(
            "horizon mismatch: requested {horizon}, test set {}, model {}",
            test.horizon, model.config.output_dim
        )));
    }
    Ok(evaluate(model, scaler, test)?.per_step_rmse)
}

/// Closed-loop alternative: a one-step model is rolled forward by feeding
/// each prediction back as the newest input.
pub fn recursive_eval<T: Scalar>(
    model: &LstmModel<T>,
    scaler: &ScalerParams<T>,
    test: &SupervisedSet<T>,
) -> Result<EvalReport<T>, EvalError> {
    check_shapes(model, test)?;
    if model.config.output_dim != 1 {
        return Err(EvalError::Structure(
            "recursive forecasting needs a one-output model".into(),
        ));
    }
    let horizon = test.horizon;
    let rollouts = test
        .inputs
        .par_iter()
        .map(|w| {
            let mut window = w.clone();
            let mut out = Vec::with_capacity(horizon);
            for _ in 0..horizon {
                let y = model.predict(&window)?[0];
                out.push(y);
                window.remove(0);
                window.push(y);
            }
            Ok(out)
        })
        .collect::<Result<Vec<Vec<T>>, LstmError>>()?;
    let step_pairs = (0..horizon)
        .map(|k| {
            rollouts
                .iter()
                .zip(&test.targets)
                .map(|(p, t)| (scaler.unscale(t[k]), scaler.unscale(p[k])))
                .collect()
        })
        .collect();
    EvalReport::from_pairs(step_pairs)
}

/// Writes `actual,predicted` rows for one forecast step (1-based) and a
/// sidecar `<path>.summary` with the step RMSE.
pub fn emit_step_scatter<T: Scalar>(
    report: &EvalReport<T>,
    step: usize,
    path: &Path,
) -> Result<(), EvalError> {
    let pairs = step
        .checked_sub(1)
        .and_then(|k| report.step_pairs.get(k))
        .ok_or_else(|| EvalError::Structure(format!("report has no forecast step {step}")))?;
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "actual,predicted")?;
    for (a, p) in pairs {
        writeln!(out, "{a:.16e},{p:.16e}")?;
    }
    out.flush()?;
    let mut side = File::create(summary_path(path))?;
    writeln!(
        side,
        "step={step} n={} rmse={:.16e}",
        pairs.len(),
        report.per_step_rmse[step - 1]
    )?;
    Ok(())
}

/// One-step scatter, see [`emit_step_scatter`].
pub fn emit_scatter<T: Scalar>(report: &EvalReport<T>, path: &Path) -> Result<(), EvalError> {
    emit_step_scatter(report, 1, path)
}

pub fn summary_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".summary");
    PathBuf::from(s)
}

/// Reads a scatter CSV back into `(actual, predicted)` pairs.
pub fn read_scatter<T: Scalar>(path: &Path) -> Result<Vec<(T, T)>, EvalError> {
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if i == 0 {
            if line != "actual,predicted" {
                return Err(EvalError::Structure(format!(
                    "unexpected scatter header `{line}`"
                )));
            }
            continue;
        }
        let parse = |s: &str| {
            s.parse::<T>()
                .map_err(|_| EvalError::Structure(format!("bad number `{s}` on line {}", i + 1)))
        };
        let (a, p) = line
            .split_once(',')
            .ok_or_else(|| EvalError::Structure(format!("line {} is not a pair", i + 1)))?;
        pairs.push((parse(a)?, parse(p)?));
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow<T> {
    pub units: usize,
    pub rmse: Result<T, String>,
}

/// How each sweep cell is seeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeedPolicy {
    /// Every unit count uses the configured seed.
    #[default]
    Shared,
    /// `k` restarts with seeds `seed..seed+k`; the restart with the lowest
    /// final validation RMSE is scored on the test set.
    BestOf(usize),
}

fn sweep_cell<T: Scalar>(
    units: usize,
    data: &Dataset<T>,
    template: &LstmConfig,
    train_config: &TrainConfig,
    policy: SeedPolicy,
) -> Result<T, String> {
    let lstm = LstmConfig { units, ..*template };
    lstm.validate().map_err(|e| e.to_string())?;
    let restarts = match policy {
        SeedPolicy::Shared => 1,
        SeedPolicy::BestOf(k) => k.max(1),
    };
    let mut best: Option<(T, LstmModel<T>)> = None;
    for r in 0..restarts {
        let cfg = TrainConfig {
            seed: train_config.seed.wrapping_add(r as u64),
            ..*train_config
        };
        let (model, history) = train(&data.train, &lstm, &cfg).map_err(|e| e.to_string())?;
        let score = history
            .val_rmse
            .last()
            .or(history.train_loss.last())
            .copied()
            .unwrap_or_else(T::infinity);
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, model));
        }
    }
    let (_, model) = best.ok_or("no restart produced a model")?;
    evaluate(&model, &data.scaler, &data.test)
        .map(|r| r.rmse)
        .map_err(|e| e.to_string())
}

/// Trains and scores one model per unit count (both LSTM layers get the
/// same width). Cells run in parallel; failures are recorded per row.
pub fn unit_sweep<T: Scalar>(
    units_list: &[usize],
    data: &Dataset<T>,
    template: &LstmConfig,
    train_config: &TrainConfig,
    policy: SeedPolicy,
) -> Result<Vec<SweepRow<T>>, EvalError> {
    if units_list.is_empty() {
        return Err(EvalError::Structure("unit list is empty".into()));
    }
    Ok(units_list
        .par_iter()
        .map(|&units| SweepRow {
            units,
            rmse: sweep_cell(units, data, template, train_config, policy),
        })
        .collect())
}

/// CSV `units,rmse`; failed cells leave `rmse` empty.
pub fn write_sweep_csv<T: Scalar, W: Write>(rows: &[SweepRow<T>], mut out: W) -> io::Result<()> {
    writeln!(out, "units,rmse")?;
    for row in rows {
        match &row.rmse {
            Ok(r) => writeln!(out, "{},{:.16e}", row.units, r)?,
            Err(_) => writeln!(out, "{},", row.units)?,
        }
    }
    out.flush()
}
