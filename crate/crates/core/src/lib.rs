//! Simulation and deep-learning forecasting of the quasiperiodically forced
//! logistic map.
//!
//! * [`map`]: the map itself, Lyapunov exponents, (α, ε′) phase scans
//! * [`pipeline`]: chronological split, min-max scaling, windowing
//! * [`lstm`]: stacked LSTM forward pass and backpropagation through time
//! * [`trainer`] and [`checkpoint`]: Adam training and model files
//! * [`evaluator`]: RMSE in original units, scatter data, unit sweeps
//! * [`experiment`]: presets and the full simulate → score pipeline
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! below fix it to `f64`, which is what the experiments use.

// Range checks are written as `!(x > lo)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod evaluator;
pub mod experiment;
pub mod lstm;
pub mod map;
pub mod pipeline;
pub mod scalar;
pub mod trainer;

pub use scalar::Scalar;

pub type MapParams = map::MapParams<f64>;
pub type ScaledDrive = map::ScaledDrive<f64>;
pub type Trajectory = map::Trajectory<f64>;
pub type PhaseCell = map::PhaseCell<f64>;
pub type ScalerParams = pipeline::ScalerParams<f64>;
pub type SupervisedSet = pipeline::SupervisedSet<f64>;
pub type Dataset = pipeline::Dataset<f64>;
pub type LstmWeights = lstm::LstmWeights<f64>;
pub type LstmModel = lstm::LstmModel<f64>;
pub type LstmState = lstm::LstmState<f64>;
pub type LossHistory = trainer::LossHistory<f64>;
pub type OptimizerState = trainer::OptimizerState<f64>;
pub type TrainError = trainer::TrainError<f64>;
pub type EvalReport = evaluator::EvalReport<f64>;
pub type SweepRow = evaluator::SweepRow<f64>;

/// Single-precision variants.
pub type MapParams32 = map::MapParams<f32>;
pub type LstmModel32 = lstm::LstmModel<f32>;

pub use experiment::{ExperimentConfig, Preset, RunSummary, SimulationConfig};
pub use lstm::LstmConfig;
pub use pipeline::PrepareConfig;
pub use trainer::TrainConfig;
