//! Stacked LSTM regressor with a linear dense head, written out by hand:
//! forward pass with cached activations and exact backpropagation through
//! time.
//!
//! Cell equations (no peepholes):
//!
//! ```text
//! i = σ(W_i x + U_i h + b_i)      f = σ(W_f x + U_f h + b_f)
//! g = tanh(W_g x + U_g h + b_g)   o = σ(W_o x + U_o h + b_o)
//! c' = f ⊙ c + i ⊙ g              h' = o ⊙ tanh(c')
//! ```
//!
//! Per layer the four gate matrices are stacked row-wise in the order
//! `i, f, g, o`, so `w_input` is `(4·units) × input_dim` and `w_recurrent`
//! is `(4·units) × units`, both row-major.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LstmError {
    #[error("invalid LSTM configuration: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LstmConfig {
    pub num_layers: usize,
    pub units: usize,
    pub input_dim: usize,
    /// Number of forecast steps emitted at once (H).
    pub output_dim: usize,
    /// Lookback length consumed per prediction (W).
    pub window: usize,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            num_layers: 2,
            units: 16,
            input_dim: 1,
            output_dim: 1,
            window: 1,
        }
    }
}

impl LstmConfig {
    pub fn new(
        num_layers: usize,
        units: usize,
        window: usize,
        horizon: usize,
    ) -> Result<Self, LstmError> {
        let cfg = Self {
            num_layers,
            units,
            input_dim: 1,
            output_dim: horizon,
            window,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), LstmError> {
        let fields = [
            ("num_layers", self.num_layers),
            ("units", self.units),
            ("input_dim", self.input_dim),
            ("output_dim", self.output_dim),
            ("window", self.window),
        ];
        match fields.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(LstmError::Config(format!("{name} must be at least 1"))),
            None => Ok(()),
        }
    }

    fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.units
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights<T> {
    pub input_dim: usize,
    pub units: usize,
    pub w_input: Vec<T>,
    pub w_recurrent: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> LayerWeights<T> {
    pub fn zeros(input_dim: usize, units: usize) -> Self {
        Self {
            input_dim,
            units,
            w_input: vec![T::zero(); 4 * units * input_dim],
            w_recurrent: vec![T::zero(); 4 * units * units],
            bias: vec![T::zero(); 4 * units],
        }
    }

    /// Slice of the bias belonging to the forget gate.
    pub fn forget_bias(&self) -> &[T] {
        &self.bias[self.units..2 * self.units]
    }

    pub fn forget_bias_mut(&mut self) -> &mut [T] {
        let u = self.units;
        &mut self.bias[u..2 * u]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseHead<T> {
    /// `output_dim × units`, row-major.
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// All trainable parameters. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights<T> {
    pub layers: Vec<LayerWeights<T>>,
    pub head: DenseHead<T>,
}

impl<T: Scalar> LstmWeights<T> {
    pub fn zeros(config: &LstmConfig) -> Self {
        Self {
            layers: (0..config.num_layers)
                .map(|l| LayerWeights::zeros(config.layer_input_dim(l), config.units))
                .collect(),
            head: DenseHead {
                weight: vec![T::zero(); config.output_dim * config.units],
                bias: vec![T::zero(); config.output_dim],
            },
        }
    }

    /// Named parameter blocks in checkpoint order.
    pub fn blocks(&self) -> Vec<(String, &[T])> {
        let mut out: Vec<(String, &[T])> = Vec::with_capacity(3 * self.layers.len() + 2);
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{l}.input_weights"), &layer.w_input));
            out.push((format!("layer{l}.recurrent_weights"), &layer.w_recurrent));
            out.push((format!("layer{l}.bias"), &layer.bias));
        }
        out.push(("head.weight".into(), &self.head.weight));
        out.push(("head.bias".into(), &self.head.bias));
        out
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::with_capacity(3 * self.layers.len() + 2);
        for layer in self.layers.iter_mut() {
            out.push(&mut layer.w_input);
            out.push(&mut layer.w_recurrent);
            out.push(&mut layer.bias);
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn num_params(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        let a = self.blocks();
        let b = other.blocks();
        a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.1.len() == y.1.len())
    }

    pub fn add_assign(&mut self, other: &Self) {
        debug_assert!(self.same_shape(other));
        for (dst, (_, src)) in self.blocks_mut().into_iter().zip(other.blocks()) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn fill_zero(&mut self) {
        for block in self.blocks_mut() {
            block.fill(T::zero());
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks()
            .iter()
            .all(|(_, b)| b.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel<T> {
    pub config: LstmConfig,
    pub weights: LstmWeights<T>,
}

impl<T: Scalar> LstmModel<T> {
    pub fn new(config: LstmConfig, weights: LstmWeights<T>) -> Result<Self, LstmError> {
        config.validate()?;
        if !weights.same_shape(&LstmWeights::zeros(&config)) {
            return Err(LstmError::Shape(
                "weights do not match configuration".into(),
            ));
        }
        Ok(Self { config, weights })
    }

    pub fn init(config: LstmConfig, seed: u64) -> Result<Self, LstmError> {
        config.validate()?;
        Ok(Self {
            config,
            weights: init_weights(&config, seed),
        })
    }

    pub fn predict(&self, window: &[T]) -> Result<Vec<T>, LstmError> {
        forward(self, window).map(|(y, _)| y)
    }
}

/// Recurrent state of every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<T> {
    pub h: Vec<Vec<T>>,
    pub c: Vec<Vec<T>>,
}

impl<T: Scalar> LstmState<T> {
    pub fn zeros(config: &LstmConfig) -> Self {
        Self {
            h: vec![vec![T::zero(); config.units]; config.num_layers],
            c: vec![vec![T::zero(); config.units]; config.num_layers],
        }
    }
}

/// Logistic function, split by sign so `exp` never overflows.
#[inline]
pub fn sigmoid<T: Scalar>(z: T) -> T {
    if z >= T::zero() {
        T::one() / (T::one() + (-z).exp())
    } else {
        let e = z.exp();
        e / (T::one() + e)
    }
}

/// What one cell step keeps for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCache<T> {
    pub x: Vec<T>,
    pub h_prev: Vec<T>,
    pub c_prev: Vec<T>,
    /// Activated gates, stacked `i, f, g, o`.
    pub gates: Vec<T>,
    pub c: Vec<T>,
    pub tanh_c: Vec<T>,
    pub h: Vec<T>,
}

pub fn cell_forward<T: Scalar>(
    x: &[T],
    h_prev: &[T],
    c_prev: &[T],
    layer: &LayerWeights<T>,
) -> Result<CellCache<T>, LstmError> {
    let (u, n_in) = (layer.units, layer.input_dim);
    if x.len() != n_in || h_prev.len() != u || c_prev.len() != u {
        return Err(LstmError::Shape(format!(
            "cell expects x[{n_in}], h[{u}], c[{u}]; got x[{}], h[{}], c[{}]",
            x.len(),
            h_prev.len(),
            c_prev.len()
        )));
    }
    let mut gates = layer.bias.clone();
    for (r, z) in gates.iter_mut().enumerate() {
        let wi = &layer.w_input[r * n_in..(r + 1) * n_in];
        let wr = &layer.w_recurrent[r * u..(r + 1) * u];
        let mut acc = *z;
        for (w, v) in wi.iter().zip(x) {
            acc += *w * *v;
        }
        for (w, v) in wr.iter().zip(h_prev) {
            acc += *w * *v;
        }
        *z = acc;
    }
    for (r, z) in gates.iter_mut().enumerate() {
        *z = if r / u == 2 { z.tanh() } else { sigmoid(*z) };
    }
    let mut c = Vec::with_capacity(u);
    let mut tanh_c = Vec::with_capacity(u);
    let mut h = Vec::with_capacity(u);
    for j in 0..u {
        let (i, f, g, o) = (gates[j], gates[u + j], gates[2 * u + j], gates[3 * u + j]);
        let cj = f * c_prev[j] + i * g;
        let tc = cj.tanh();
        c.push(cj);
        tanh_c.push(tc);
        h.push(o * tc);
    }
    Ok(CellCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        gates,
        c,
        tanh_c,
        h,
    })
}

/// Activations of one forward pass, indexed `[layer][time]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache<T> {
    pub config: LstmConfig,
    pub cells: Vec<Vec<CellCache<T>>>,
    pub output: Vec<T>,
}

/// Runs one window from zero state through every layer and applies the
/// linear head to the last top-layer hidden state.
pub fn forward<T: Scalar>(
    model: &LstmModel<T>,
    window: &[T],
) -> Result<(Vec<T>, ForwardCache<T>), LstmError> {
    let cfg = &model.config;
    if window.len() != cfg.window * cfg.input_dim {
        return Err(LstmError::Shape(format!(
            "window has {} values, model expects {}",
            window.len(),
            cfg.window * cfg.input_dim
        )));
    }
    let mut cells: Vec<Vec<CellCache<T>>> = Vec::with_capacity(cfg.num_layers);
    for (l, layer) in model.weights.layers.iter().enumerate() {
        let mut steps: Vec<CellCache<T>> = Vec::with_capacity(cfg.window);
        let zero = vec![T::zero(); cfg.units];
        for t in 0..cfg.window {
            let x = if l == 0 {
                &window[t * cfg.input_dim..(t + 1) * cfg.input_dim]
            } else {
                &cells[l - 1][t].h[..]
            };
            let cell = match steps.last() {
                Some(prev) => cell_forward(x, &prev.h, &prev.c, layer)?,
                None => cell_forward(x, &zero, &zero, layer)?,
            };
            steps.push(cell);
        }
        cells.push(steps);
    }
    let h_last = &cells[cfg.num_layers - 1][cfg.window - 1].h;
    let head = &model.weights.head;
    let output: Vec<T> = (0..cfg.output_dim)
        .map(|k| {
            let row = &head.weight[k * cfg.units..(k + 1) * cfg.units];
            row.iter()
                .zip(h_last)
                .fold(head.bias[k], |acc, (w, h)| acc + *w * *h)
        })
        .collect();
    Ok((
        output.clone(),
        ForwardCache {
            config: *cfg,
            cells,
            output,
        },
    ))
}

pub fn mse_loss<T: Scalar>(pred: &[T], target: &[T]) -> Result<T, LstmError> {
    check_pair(pred, target)?;
    let sum: T = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (*p - *t) * (*p - *t))
        .sum();
    Ok(sum / T::from_count(pred.len()))
}

/// d(mse)/d(pred).
pub fn mse_grad<T: Scalar>(pred: &[T], target: &[T]) -> Result<Vec<T>, LstmError> {
    check_pair(pred, target)?;
    let scale = T::lit(2.0) / T::from_count(pred.len());
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| scale * (*p - *t))
        .collect())
}

fn check_pair<T>(pred: &[T], target: &[T]) -> Result<(), LstmError> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(LstmError::Shape(format!(
            "prediction has {} values, target {}",
            pred.len(),
            target.len()
        )));
    }
    Ok(())
}

/// Gradients of a scalar loss with respect to every parameter, given
/// `d_out = dL/d(prediction)` for the pass recorded in `cache`.
pub fn backward<T: Scalar>(
    model: &LstmModel<T>,
    cache: &ForwardCache<T>,
    d_out: &[T],
) -> Result<LstmWeights<T>, LstmError> {
    let mut grads = LstmWeights::zeros(&model.config);
    backward_into(model, cache, d_out, &mut grads)?;
    Ok(grads)
}

/// Like [`backward`] but adds into an existing gradient buffer.
pub fn backward_into<T: Scalar>(
    model: &LstmModel<T>,
    cache: &ForwardCache<T>,
    d_out: &[T],
    grads: &mut LstmWeights<T>,
) -> Result<(), LstmError> {
    let cfg = &model.config;
    if cache.config != *cfg
        || cache.cells.len() != cfg.num_layers
        || cache.cells.iter().any(|s| s.len() != cfg.window)
    {
        return Err(LstmError::Shape(
            "forward cache does not belong to this model".into(),
        ));
    }
    if d_out.len() != cfg.output_dim {
        return Err(LstmError::Shape(format!(
            "loss gradient has {} values, model emits {}",
            d_out.len(),
            cfg.output_dim
        )));
    }
    let u = cfg.units;
    let steps = cfg.window;
    let top = cfg.num_layers - 1;

    let head = &model.weights.head;
    let h_last = &cache.cells[top][steps - 1].h;
    let mut dh_in = vec![vec![T::zero(); u]; steps];
    for (k, &d) in d_out.iter().enumerate() {
        grads.head.bias[k] += d;
        let row = k * u..(k + 1) * u;
        for ((g, h), (w, dh)) in grads.head.weight[row.clone()]
            .iter_mut()
            .zip(h_last)
            .zip(head.weight[row].iter().zip(dh_in[steps - 1].iter_mut()))
        {
            *g += d * *h;
            *dh += d * *w;
        }
    }

    let mut dz = vec![T::zero(); 4 * u];
    for l in (0..cfg.num_layers).rev() {
        let layer = &model.weights.layers[l];
        let grad = &mut grads.layers[l];
        let n_in = layer.input_dim;
        let mut dh_rec = vec![T::zero(); u];
        let mut dc_next = vec![T::zero(); u];
        let mut dx = vec![vec![T::zero(); n_in]; if l > 0 { steps } else { 0 }];
        for t in (0..steps).rev() {
            let cell = &cache.cells[l][t];
            for j in 0..u {
                let (i, f, g, o) = (
                    cell.gates[j],
                    cell.gates[u + j],
                    cell.gates[2 * u + j],
                    cell.gates[3 * u + j],
                );
                let tc = cell.tanh_c[j];
                let dh = dh_in[t][j] + dh_rec[j];
                let dc = dc_next[j] + dh * o * (T::one() - tc * tc);
                dz[j] = dc * g * i * (T::one() - i);
                dz[u + j] = dc * cell.c_prev[j] * f * (T::one() - f);
                dz[2 * u + j] = dc * i * (T::one() - g * g);
                dz[3 * u + j] = dh * tc * o * (T::one() - o);
                dc_next[j] = dc * f;
            }
            dh_rec.fill(T::zero());
            for (r, &d) in dz.iter().enumerate() {
                grad.bias[r] += d;
                let gi = &mut grad.w_input[r * n_in..(r + 1) * n_in];
                for (g, x) in gi.iter_mut().zip(&cell.x) {
                    *g += d * *x;
                }
                let rows = r * u..(r + 1) * u;
                for ((g, hp), (w, dr)) in grad.w_recurrent[rows.clone()]
                    .iter_mut()
                    .zip(&cell.h_prev)
                    .zip(layer.w_recurrent[rows].iter().zip(dh_rec.iter_mut()))
                {
                    *g += d * *hp;
                    *dr += d * *w;
                }
                if l > 0 {
                    let wi = &layer.w_input[r * n_in..(r + 1) * n_in];
                    for (dxk, w) in dx[t].iter_mut().zip(wi) {
                        *dxk += d * *w;
                    }
                }
            }
        }
        dh_in = dx;
    }
    Ok(())
}

/// Seeded initialisation: input and head weights uniform in ±1/√fan_in,
/// recurrent weights uniform in ±1/√units, forget bias 1, other biases 0.
pub fn init_weights<T: Scalar>(config: &LstmConfig, seed: u64) -> LstmWeights<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |v: &mut [T], fan_in: usize| {
        let k = 1.0 / (fan_in as f64).sqrt();
        for x in v.iter_mut() {
            *x = T::lit(rng.gen_range(-k..k));
        }
    };
    let mut w = LstmWeights::zeros(config);
    for layer in w.layers.iter_mut() {
        uniform(&mut layer.w_input, layer.input_dim);
        uniform(&mut layer.w_recurrent, layer.units);
        layer.forget_bias_mut().fill(T::one());
    }
    uniform(&mut w.head.weight, config.units);
    w
}
