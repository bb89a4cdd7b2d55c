//! Command-line flags, the optional TOML config file, and their resolution
//! into core configuration. Precedence: flags, then file, then defaults.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use qpl_core::experiment::{
    ExperimentConfig, Preset, SimulationConfig, DEFAULT_BURN_IN, DEFAULT_N, DEFAULT_PHI0,
    DEFAULT_X0,
};
use qpl_core::map::{golden_omega, MapParams, ScaledDrive};
use qpl_core::{PrepareConfig, TrainConfig};

/// Invalid user input. Reported with exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err<E: fmt::Display>(e: E) -> anyhow::Error {
    ConfigError(e.to_string()).into()
}

#[derive(Debug, Parser)]
#[command(
    name = "qpl",
    version,
    about = "Quasiperiodically forced logistic map: simulation, Lyapunov scans and LSTM forecasting"
)]
pub struct Cli {
    /// TOML file with default values for any flag (flags win).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Iterate the map and write the `n,x,phi` trajectory CSV.
    Simulate(SimulateArgs),
    /// Print the Lyapunov exponent of one parameter pair.
    Lyapunov(MapArgs),
    /// Lyapunov exponent over an (alpha, eps') grid as CSV.
    PhaseScan(ScanArgs),
    /// Simulate, split, scale and window; write the datasets.
    Prepare(ExperimentArgs),
    /// Train a model and write its checkpoint and loss history.
    Train(ExperimentArgs),
    /// Score a checkpoint on freshly simulated test data.
    Eval(EvalArgs),
    /// Full pipeline for one preset or parameter pair.
    Run(ExperimentArgs),
    /// Train and score one model per LSTM width.
    SweepUnits(SweepArgs),
    /// Direct multi-step forecasting (default horizon 5).
    Multistep(MultistepArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct MapArgs {
    /// One of c1a, c1b, c2a, c2b.
    #[arg(long)]
    pub regime_preset: Option<String>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Rescaled drive eps' = eps/(4/alpha - 1).
    #[arg(long, conflicts_with = "epsilon")]
    pub eps_prime: Option<f64>,
    /// Raw forcing amplitude.
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub omega: Option<f64>,
    #[arg(long)]
    pub x0: Option<f64>,
    #[arg(long)]
    pub phi0: Option<f64>,
    /// Number of recorded iterations.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub map: MapArgs,
    /// Output file (stdout when omitted).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ScanArgs {
    #[arg(long, default_value_t = 2.6)]
    pub alpha_min: f64,
    #[arg(long, default_value_t = 4.0)]
    pub alpha_max: f64,
    #[arg(long, default_value_t = 141)]
    pub alpha_steps: usize,
    #[arg(long, default_value_t = 0.0)]
    pub eps_prime_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub eps_prime_max: f64,
    #[arg(long, default_value_t = 101)]
    pub eps_prime_steps: usize,
    #[arg(long)]
    pub x0: Option<f64>,
    #[arg(long)]
    pub phi0: Option<f64>,
    /// Orbit length per cell.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Lower end of the scaled range.
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    /// Upper end of the scaled range.
    #[arg(long, allow_hyphen_values = true)]
    pub b: Option<f64>,
    /// Lookback window W.
    #[arg(long)]
    pub window: Option<usize>,
    /// Forecast horizon H.
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Fit the scaler on the whole series instead of the training part.
    #[arg(long)]
    pub fit_on_all: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub units: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_shuffle: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentArgs {
    #[command(flatten)]
    pub map: MapArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Parent directory for run outputs.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub exp: ExperimentArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32,64")]
    pub units_list: Vec<usize>,
    /// Train k restarts per width and keep the best on validation data.
    #[arg(long)]
    pub best_of: Option<usize>,
    #[command(flatten)]
    pub exp: ExperimentArgs,
}

#[derive(Debug, Clone, Args)]
pub struct MultistepArgs {
    /// Also roll a one-step model forward in closed loop for comparison.
    #[arg(long)]
    pub recursive: bool,
    #[command(flatten)]
    pub exp: ExperimentArgs,
}

/// Mirror of the flags for the config file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub regime_preset: Option<String>,
    pub alpha: Option<f64>,
    pub eps_prime: Option<f64>,
    pub epsilon: Option<f64>,
    pub omega: Option<f64>,
    pub x0: Option<f64>,
    pub phi0: Option<f64>,
    pub n: Option<usize>,
    pub burn_in: Option<usize>,
    pub train_fraction: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub window: Option<usize>,
    pub horizon: Option<usize>,
    pub fit_on_all: Option<bool>,
    pub layers: Option<usize>,
    pub units: Option<usize>,
    pub lr: Option<f64>,
    pub batch: Option<usize>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub shuffle: Option<bool>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| config_err(format!("config {}: {e}", path.display())))
    }
}

/// Map settings after merging flags, file and preset.
pub fn resolve_simulation(
    map: &MapArgs,
    file: &FileConfig,
) -> anyhow::Result<(&'static str, SimulationConfig)> {
    let preset_name = map.regime_preset.as_ref().or(file.regime_preset.as_ref());
    let preset = match preset_name {
        Some(name) => name.parse::<Preset>().map_err(config_err)?,
        None => Preset::C1a,
    };
    let (preset_alpha, preset_prime) = preset.params();
    let alpha_given = map.alpha.or(file.alpha);
    let epsilon = map.epsilon.or(file.epsilon);
    let eps_prime = map.eps_prime.or(file.eps_prime);
    if epsilon.is_some() && eps_prime.is_some() {
        return Err(config_err("give either epsilon or eps-prime, not both"));
    }
    let alpha = alpha_given.unwrap_or(preset_alpha);
    let custom = alpha_given.is_some() || epsilon.is_some() || eps_prime.is_some();
    let epsilon = match epsilon {
        Some(e) => e,
        None => {
            let drive = ScaledDrive::new(eps_prime.unwrap_or(preset_prime)).map_err(config_err)?;
            qpl_core::map::epsilon_from_prime(alpha, drive).map_err(config_err)?
        }
    };
    let omega = map.omega.or(file.omega).unwrap_or_else(golden_omega);
    MapParams::with_omega(alpha, epsilon, omega).map_err(config_err)?;
    let sim = SimulationConfig {
        alpha,
        epsilon,
        omega,
        x0: map.x0.or(file.x0).unwrap_or(DEFAULT_X0),
        phi0: map.phi0.or(file.phi0).unwrap_or(DEFAULT_PHI0),
        n: map.n.or(file.n).unwrap_or(DEFAULT_N),
        burn_in: map.burn_in.or(file.burn_in).unwrap_or(DEFAULT_BURN_IN),
    };
    if !(sim.x0 > 0.0 && sim.x0 < 1.0) {
        return Err(config_err(format!("x0 must lie in (0, 1), got {}", sim.x0)));
    }
    if !(0.0..1.0).contains(&sim.phi0) {
        return Err(config_err(format!(
            "phi0 must lie in [0, 1), got {}",
            sim.phi0
        )));
    }
    if sim.n == 0 {
        return Err(config_err("n must be at least 1"));
    }
    let label = if custom { "custom" } else { preset.name() };
    Ok((label, sim))
}

pub fn resolve_experiment(
    args: &ExperimentArgs,
    file: &FileConfig,
) -> anyhow::Result<ExperimentConfig> {
    let (label, simulation) = resolve_simulation(&args.map, file)?;
    let d = PrepareConfig::default();
    let prepare = PrepareConfig {
        train_fraction: args
            .data
            .train_fraction
            .or(file.train_fraction)
            .unwrap_or(d.train_fraction),
        a: args.data.a.or(file.a).unwrap_or(d.a),
        b: args.data.b.or(file.b).unwrap_or(d.b),
        window: args.data.window.or(file.window).unwrap_or(d.window),
        horizon: args.data.horizon.or(file.horizon).unwrap_or(d.horizon),
        fit_on_all: args.data.fit_on_all || file.fit_on_all.unwrap_or(false),
    };
    if !(prepare.train_fraction > 0.0 && prepare.train_fraction < 1.0) {
        return Err(config_err(format!(
            "train fraction must lie in (0, 1), got {}",
            prepare.train_fraction
        )));
    }
    if !(prepare.b > prepare.a) {
        return Err(config_err(format!(
            "scaled range needs b > a, got [{}, {}]",
            prepare.a, prepare.b
        )));
    }
    let t = TrainConfig::default();
    let train = TrainConfig {
        learning_rate: args.train.lr.or(file.lr).unwrap_or(t.learning_rate),
        batch_size: args.train.batch.or(file.batch).unwrap_or(t.batch_size),
        epochs: args.train.epochs.or(file.epochs).unwrap_or(t.epochs),
        seed: args.train.seed.or(file.seed).unwrap_or(t.seed),
        shuffle: !args.train.no_shuffle && file.shuffle.unwrap_or(true),
        ..t
    };
    train.validate().map_err(config_err)?;
    let cfg = ExperimentConfig {
        label,
        simulation,
        prepare,
        num_layers: args.model.layers.or(file.layers).unwrap_or(2),
        units: args.model.units.or(file.units).unwrap_or(16),
        train,
    };
    cfg.lstm().validate().map_err(config_err)?;
    if simulation.n < 10 {
        return Err(config_err("experiments need n >= 10"));
    }
    Ok(cfg)
}

pub fn out_root(args: &ExperimentArgs, file: &FileConfig) -> PathBuf {
    args.out
        .clone()
        .or_else(|| file.out.clone())
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// `<preset>_seed<seed>`, with `_w<W>`/`_h<H>` when not 1.
pub fn run_dir_name(cfg: &ExperimentConfig) -> String {
    let mut name = format!("{}_seed{}", cfg.label, cfg.train.seed);
    if cfg.prepare.window != 1 {
        name.push_str(&format!("_w{}", cfg.prepare.window));
    }
    if cfg.prepare.horizon != 1 {
        name.push_str(&format!("_h{}", cfg.prepare.horizon));
    }
    name
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("qpl").chain(args.iter().copied())).unwrap()
    }

    fn experiment(args: &[&str]) -> ExperimentArgs {
        match parse(args).command {
            Command::Run(a) => a,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn preset_defaults() {
        let cfg = resolve_experiment(
            &experiment(&["run", "--regime-preset", "c2b"]),
            &FileConfig::default(),
        )
        .unwrap();
        assert_eq!(cfg.label, "c2b");
        assert_eq!(cfg.simulation.alpha, 3.1);
        assert!((cfg.simulation.eps_prime().unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(
            (
                cfg.num_layers,
                cfg.units,
                cfg.prepare.window,
                cfg.prepare.horizon
            ),
            (2, 16, 1, 1)
        );
        assert_eq!(run_dir_name(&cfg), "c2b_seed0");
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file: FileConfig =
            toml::from_str("units = 8\nepochs = 3\nseed = 4\nwindow = 2").unwrap();
        let cfg = resolve_experiment(
            &experiment(&["run", "--units", "32", "--horizon", "3"]),
            &file,
        )
        .unwrap();
        assert_eq!(cfg.units, 32);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.prepare.window, 2);
        assert_eq!(cfg.prepare.horizon, 3);
        assert_eq!(cfg.train.learning_rate, 1e-3);
        assert_eq!(run_dir_name(&cfg), "c1a_seed4_w2_h3");
    }

    #[test]
    fn epsilon_and_prime_are_exclusive() {
        assert!(
            Cli::try_parse_from(["qpl", "lyapunov", "--epsilon", "0.1", "--eps-prime", "0.2"])
                .is_err()
        );
        let file: FileConfig = toml::from_str("eps_prime = 0.2").unwrap();
        let args = MapArgs {
            epsilon: Some(0.1),
            ..Default::default()
        };
        let err = resolve_simulation(&args, &file).unwrap_err();
        assert!(err.downcast_ref::<ConfigError>().is_some());
    }

    #[test]
    fn rejects_out_of_range_alpha() {
        let args = MapArgs {
            alpha: Some(4.1),
            ..Default::default()
        };
        assert!(resolve_simulation(&args, &FileConfig::default()).is_err());
        let args = MapArgs {
            alpha: Some(4.0),
            epsilon: Some(0.0),
            ..Default::default()
        };
        let (label, sim) = resolve_simulation(&args, &FileConfig::default()).unwrap();
        assert_eq!((label, sim.alpha, sim.epsilon), ("custom", 4.0, 0.0));
    }

    #[test]
    fn unknown_file_keys_are_errors() {
        assert!(toml::from_str::<FileConfig>("unit = 3").is_err());
    }
}
