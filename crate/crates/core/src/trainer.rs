//! Mini-batch Adam training of [`LstmModel`].

use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::lstm::{
    backward_into, forward, mse_grad, mse_loss, LstmConfig, LstmError, LstmModel, LstmWeights,
};
use crate::pipeline::SupervisedSet;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum TrainError<T: Scalar> {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] LstmError),
    #[error("non-finite gradient in parameter block `{block}`")]
    NonFiniteGradient { block: String },
    /// Loss blew up. `last_good` holds the weights at the end of the last
    /// finite epoch (or the initial weights).
    #[error("training diverged in epoch {epoch}: {reason}")]
    Diverged {
        epoch: usize,
        reason: String,
        last_good: Box<LstmModel<T>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_hat: f64,
    pub shuffle: bool,
    /// Trailing share of the training samples held out for per-epoch RMSE.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            epochs: 50,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
            shuffle: true,
            validation_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.batch_size == 0 {
            return Err("batch size must be at least 1".into());
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(format!("{name} must lie in (0, 1), got {b}"));
            }
        }
        if !(self.eps_hat > 0.0) {
            return Err(format!("eps_hat must be positive, got {}", self.eps_hat));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(format!(
                "validation fraction must lie in [0, 1), got {}",
                self.validation_fraction
            ));
        }
        Ok(())
    }
}

/// Adam moment accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub m: LstmWeights<T>,
    pub v: LstmWeights<T>,
    pub t: u64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(config: &LstmConfig) -> Self {
        Self {
            m: LstmWeights::zeros(config),
            v: LstmWeights::zeros(config),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Refuses to touch anything if a gradient
/// entry is non-finite.
pub fn adam_step<T: Scalar>(
    weights: &mut LstmWeights<T>,
    grads: &LstmWeights<T>,
    state: &mut OptimizerState<T>,
    config: &TrainConfig,
) -> Result<(), TrainError<T>> {
    if !weights.same_shape(grads) || !weights.same_shape(&state.m) {
        return Err(
            LstmError::Shape("optimizer state, weights and gradients disagree".into()).into(),
        );
    }
    if let Some((name, _)) = grads
        .blocks()
        .into_iter()
        .find(|(_, b)| b.iter().any(|v| !v.is_finite()))
    {
        return Err(TrainError::NonFiniteGradient { block: name });
    }
    state.t += 1;
    let (b1, b2) = (T::lit(config.beta1), T::lit(config.beta2));
    let lr = T::lit(config.learning_rate);
    let eps = T::lit(config.eps_hat);
    let c1 = T::one() - b1.powi(state.t as i32);
    let c2 = T::one() - b2.powi(state.t as i32);
    let g_blocks = grads.blocks();
    for (((w, m), v), (_, g)) in weights
        .blocks_mut()
        .into_iter()
        .zip(state.m.blocks_mut())
        .zip(state.v.blocks_mut())
        .zip(g_blocks)
    {
        for k in 0..w.len() {
            let gk = g[k];
            m[k] = b1 * m[k] + (T::one() - b1) * gk;
            v[k] = b2 * v[k] + (T::one() - b2) * gk * gk;
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            w[k] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossHistory<T> {
    pub train_loss: Vec<T>,
    /// Empty when no validation samples were held out.
    pub val_rmse: Vec<T>,
}

impl<T: Scalar> LossHistory<T> {
    pub fn epochs(&self) -> usize {
        self.train_loss.len()
    }

    /// CSV `epoch,train_loss,val_rmse` (scaled units, epochs from 1).
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "epoch,train_loss,val_rmse")?;
        for (e, loss) in self.train_loss.iter().enumerate() {
            match self.val_rmse.get(e) {
                Some(v) => writeln!(out, "{},{:.16e},{:.16e}", e + 1, loss, v)?,
                None => writeln!(out, "{},{:.16e},", e + 1, loss)?,
            }
        }
        out.flush()
    }
}

/// Mean per-sample MSE of `model` over `data`.
pub fn mean_loss<T: Scalar>(model: &LstmModel<T>, data: &SupervisedSet<T>) -> Result<T, LstmError> {
    let mut sum = T::zero();
    for (x, y) in data.inputs.iter().zip(&data.targets) {
        sum += mse_loss(&model.predict(x)?, y)?;
    }
    Ok(sum / T::from_count(data.len().max(1)))
}

/// Samples per parallel gradient task. Partial sums are reduced in chunk
/// order, so results do not depend on the number of threads.
const GRAD_CHUNK: usize = 16;

/// Loss and gradient of the mean per-sample MSE over `batch` (indices into
/// `data`).
pub fn batch_gradient<T: Scalar>(
    model: &LstmModel<T>,
    data: &SupervisedSet<T>,
    batch: &[usize],
    grads: &mut LstmWeights<T>,
) -> Result<T, LstmError> {
    let inv = T::one() / T::from_count(batch.len());
    let partials = batch
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut g = LstmWeights::zeros(&model.config);
            let mut loss = T::zero();
            for &i in chunk {
                let (pred, cache) = forward(model, &data.inputs[i])?;
                let target = &data.targets[i];
                loss += mse_loss(&pred, target)?;
                let d: Vec<T> = mse_grad(&pred, target)?
                    .into_iter()
                    .map(|v| v * inv)
                    .collect();
                backward_into(model, &cache, &d, &mut g)?;
            }
            Ok((loss, g))
        })
        .collect::<Result<Vec<_>, LstmError>>()?;
    grads.fill_zero();
    let mut loss = T::zero();
    for (l, g) in &partials {
        loss += *l;
        grads.add_assign(g);
    }
    Ok(loss * inv)
}

fn check_data<T: Scalar>(data: &SupervisedSet<T>, config: &LstmConfig) -> Result<(), String> {
    if data.is_empty() {
        return Err("training set is empty".into());
    }
    if data.window != config.window || data.horizon != config.output_dim {
        return Err(format!(
            "data has W={}, H={} but model expects W={}, H={}",
            data.window, data.horizon, config.window, config.output_dim
        ));
    }
    Ok(())
}

/// Trains a freshly initialised model. The last `validation_fraction` of
/// the samples is held out and only monitored.
pub fn train<T: Scalar>(
    data: &SupervisedSet<T>,
    lstm: &LstmConfig,
    config: &TrainConfig,
) -> Result<(LstmModel<T>, LossHistory<T>), TrainError<T>> {
    let model = LstmModel::init(*lstm, config.seed)?;
    train_from(model, data, config)
}

/// Continues training an existing model.
pub fn train_from<T: Scalar>(
    mut model: LstmModel<T>,
    data: &SupervisedSet<T>,
    config: &TrainConfig,
) -> Result<(LstmModel<T>, LossHistory<T>), TrainError<T>> {
    config.validate().map_err(TrainError::Config)?;
    check_data(data, &model.config).map_err(TrainError::Config)?;
    let (fit, val) = data.split_tail(config.validation_fraction);
    if fit.is_empty() {
        return Err(TrainError::Config(
            "no samples left after the validation hold-out".into(),
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..fit.len()).collect();
    let mut opt = OptimizerState::new(&model.config);
    let mut grads = LstmWeights::zeros(&model.config);
    let mut history = LossHistory::default();
    let mut last_good = model.clone();

    for epoch in 1..=config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut loss_sum = T::zero();
        for batch in order.chunks(config.batch_size) {
            let loss = batch_gradient(&model, &fit, batch, &mut grads)?;
            if !loss.is_finite() {
                return Err(TrainError::Diverged {
                    epoch,
                    reason: "non-finite batch loss".into(),
                    last_good: Box::new(last_good),
                });
            }
            loss_sum += loss * T::from_count(batch.len());
            if let Err(e) = adam_step(&mut model.weights, &grads, &mut opt, config) {
                return Err(TrainError::Diverged {
                    epoch,
                    reason: e.to_string(),
                    last_good: Box::new(last_good),
                });
            }
        }
        let epoch_loss = loss_sum / T::from_count(fit.len());
        if !epoch_loss.is_finite() || !model.weights.is_finite() {
            return Err(TrainError::Diverged {
                epoch,
                reason: "non-finite weights after epoch".into(),
                last_good: Box::new(last_good),
            });
        }
        history.train_loss.push(epoch_loss);
        if !val.is_empty() {
            let v = mean_loss(&model, &val)?.sqrt();
            history.val_rmse.push(v);
            log::info!("epoch {epoch}: train_loss={epoch_loss:e} val_rmse={v:e}");
        } else {
            log::info!("epoch {epoch}: train_loss={epoch_loss:e}");
        }
        last_good = model.clone();
    }
    Ok((model, history))
}
