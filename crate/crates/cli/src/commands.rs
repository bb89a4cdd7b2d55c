use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::info;

use qpl_core::checkpoint::{load_checkpoint, save_checkpoint};
use qpl_core::evaluator::{
    emit_scatter, emit_step_scatter, evaluate, recursive_eval, unit_sweep, write_sweep_csv,
    SeedPolicy,
};
use qpl_core::experiment::{prepare_dataset, run_experiment, ExperimentConfig, RunSummary};
use qpl_core::map::{iterate, lyapunov, phase_scan, write_phase_csv, GridAxis, OrbitSpec};
use qpl_core::pipeline::{split, window};
use qpl_core::trainer::train;
use qpl_core::{EvalReport, SupervisedSet};

use crate::config::{
    config_err, out_root, resolve_experiment, resolve_simulation, run_dir_name, EvalArgs,
    ExperimentArgs, FileConfig, MapArgs, MultistepArgs, ScanArgs, SimulateArgs, SweepArgs,
};

pub const CHECKPOINT_FILE: &str = "model.ckpt";

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn run_dir(args: &ExperimentArgs, file: &FileConfig, cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = out_root(args, file).join(run_dir_name(cfg));
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

fn write_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, summary)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn write_scatters(dir: &Path, report: &EvalReport) -> Result<()> {
    emit_scatter(report, &dir.join("scatter.csv"))?;
    if report.horizon() > 1 {
        for step in 1..=report.horizon() {
            emit_step_scatter(report, step, &dir.join(format!("scatter_step{step}.csv")))?;
        }
    }
    Ok(())
}

fn write_supervised(path: &Path, set: &SupervisedSet) -> Result<()> {
    let mut out = create(path)?;
    let header: Vec<String> = (1..=set.window)
        .map(|i| format!("in_{i}"))
        .chain((1..=set.horizon).map(|k| format!("out_{k}")))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for (x, y) in set.inputs.iter().zip(&set.targets) {
        let row: Vec<String> = x.iter().chain(y).map(|v| format!("{v:.16e}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn simulate(args: &SimulateArgs, file: &FileConfig) -> Result<()> {
    let (_, sim) = resolve_simulation(&args.map, file)?;
    let params = sim.map_params::<f64>().map_err(config_err)?;
    let traj = iterate(&params, sim.x0, sim.phi0, sim.n, sim.burn_in).context("simulate")?;
    match &args.out {
        Some(path) => traj.write_csv(create(path)?)?,
        None => traj.write_csv(BufWriter::new(io::stdout().lock()))?,
    }
    Ok(())
}

pub fn lyapunov_cmd(args: &MapArgs, file: &FileConfig) -> Result<()> {
    let (_, sim) = resolve_simulation(args, file)?;
    let params = sim.map_params::<f64>().map_err(config_err)?;
    let lambda = lyapunov(&params, sim.x0, sim.phi0, sim.n, sim.burn_in).context("lyapunov")?;
    println!("{lambda}");
    Ok(())
}

pub fn phase_scan_cmd(args: &ScanArgs, file: &FileConfig) -> Result<()> {
    if args.alpha_steps == 0 || args.eps_prime_steps == 0 {
        return Err(config_err("grid axes need at least one step"));
    }
    if args.n == 0 {
        return Err(config_err("n must be at least 1"));
    }
    let orbit = OrbitSpec {
        x0: args
            .x0
            .or(file.x0)
            .unwrap_or(qpl_core::experiment::DEFAULT_X0),
        phi0: args
            .phi0
            .or(file.phi0)
            .unwrap_or(qpl_core::experiment::DEFAULT_PHI0),
        n: args.n,
        burn_in: args
            .burn_in
            .or(file.burn_in)
            .unwrap_or(qpl_core::experiment::DEFAULT_BURN_IN),
    };
    let alpha = GridAxis::new(args.alpha_min, args.alpha_max, args.alpha_steps);
    let eps = GridAxis::new(args.eps_prime_min, args.eps_prime_max, args.eps_prime_steps);
    info!(
        "scanning {} x {} cells",
        args.alpha_steps, args.eps_prime_steps
    );
    let cells = phase_scan(&alpha, &eps, orbit).map_err(config_err)?;
    let failed = cells.iter().filter(|c| c.lambda.is_err()).count();
    if failed > 0 {
        info!("{failed} cells could not be evaluated");
    }
    match &args.out {
        Some(path) => write_phase_csv(&cells, create(path)?)?,
        None => write_phase_csv(&cells, BufWriter::new(io::stdout().lock()))?,
    }
    Ok(())
}

pub fn prepare_cmd(args: &ExperimentArgs, file: &FileConfig) -> Result<()> {
    let cfg = resolve_experiment(args, file)?;
    let (_, dataset) = prepare_dataset::<f64>(&cfg)?;
    let dir = run_dir(args, file, &cfg)?;
    write_supervised(&dir.join("train.csv"), &dataset.train)?;
    write_supervised(&dir.join("test.csv"), &dataset.test)?;
    let mut out = create(&dir.join("scaler.json"))?;
    serde_json::to_writer_pretty(&mut out, &dataset.scaler)?;
    writeln!(out)?;
    out.flush()?;
    println!(
        "{} train samples, {} test samples -> {}",
        dataset.train.len(),
        dataset.test.len(),
        dir.display()
    );
    Ok(())
}

pub fn train_cmd(args: &ExperimentArgs, file: &FileConfig) -> Result<()> {
    let cfg = resolve_experiment(args, file)?;
    let (_, dataset) = prepare_dataset::<f64>(&cfg)?;
    let (model, history) = train(&dataset.train, &cfg.lstm(), &cfg.train)
        .map_err(|e| anyhow::anyhow!("train: {e}"))?;
    let dir = run_dir(args, file, &cfg)?;
    save_checkpoint(&model, &dataset.scaler, &dir.join(CHECKPOINT_FILE))?;
    history.write_csv(create(&dir.join("loss_history.csv"))?)?;
    println!("{}", dir.join(CHECKPOINT_FILE).display());
    Ok(())
}

pub fn eval_cmd(args: &EvalArgs, file: &FileConfig) -> Result<()> {
    let mut cfg = resolve_experiment(&args.exp, file)?;
    let (model, scaler) = load_checkpoint::<f64>(&args.checkpoint)
        .with_context(|| format!("cannot load {}", args.checkpoint.display()))?;
    let lstm = model.config;
    cfg.num_layers = lstm.num_layers;
    cfg.units = lstm.units;
    cfg.prepare.window = lstm.window;
    cfg.prepare.horizon = lstm.output_dim;
    let series = cfg.simulation.simulate::<f64>().context("simulate")?;
    let (_, test) = split(&series, cfg.prepare.train_fraction).context("prepare")?;
    let test = window(&scaler.scale_all(test), lstm.window, lstm.output_dim).context("prepare")?;
    let report = evaluate(&model, &scaler, &test).context("evaluate")?;
    let summary = RunSummary::new(&cfg, &report);
    if let Some(dir) = args.exp.out.as_ref().or(file.out.as_ref()) {
        fs::create_dir_all(dir)?;
        write_scatters(dir, &report)?;
        write_summary(&dir.join("summary.json"), &summary)?;
    }
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

pub fn run_cmd(args: &ExperimentArgs, file: &FileConfig) -> Result<()> {
    let cfg = resolve_experiment(args, file)?;
    run_resolved(args, file, &cfg)?;
    Ok(())
}

fn run_resolved(
    args: &ExperimentArgs,
    file: &FileConfig,
    cfg: &ExperimentConfig,
) -> Result<PathBuf> {
    info!(
        "run {} (W={}, H={}, seed {})",
        cfg.label, cfg.prepare.window, cfg.prepare.horizon, cfg.train.seed
    );
    let outcome = run_experiment::<f64>(cfg)?;
    let dir = run_dir(args, file, cfg)?;
    save_checkpoint(
        &outcome.model,
        &outcome.dataset.scaler,
        &dir.join(CHECKPOINT_FILE),
    )?;
    outcome
        .history
        .write_csv(create(&dir.join("loss_history.csv"))?)?;
    write_scatters(&dir, &outcome.report)?;
    let summary = RunSummary::new(cfg, &outcome.report);
    write_summary(&dir.join("summary.json"), &summary)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(dir)
}

pub fn sweep_cmd(args: &SweepArgs, file: &FileConfig) -> Result<()> {
    let cfg = resolve_experiment(&args.exp, file)?;
    if args.units_list.is_empty() || args.units_list.contains(&0) {
        return Err(config_err("unit list must hold positive widths"));
    }
    let policy = match args.best_of {
        None => SeedPolicy::Shared,
        Some(0) => return Err(config_err("best-of needs at least one restart")),
        Some(k) => SeedPolicy::BestOf(k),
    };
    let (_, dataset) = prepare_dataset::<f64>(&cfg)?;
    let rows = unit_sweep(&args.units_list, &dataset, &cfg.lstm(), &cfg.train, policy)
        .context("evaluate")?;
    let dir = run_dir(&args.exp, file, &cfg)?;
    write_sweep_csv(&rows, create(&dir.join("sweep_units.csv"))?)?;
    write_sweep_csv(&rows, io::stdout().lock())?;
    for row in &rows {
        if let Err(e) = &row.rmse {
            log::warn!("units={} failed: {e}", row.units);
        }
    }
    Ok(())
}

pub fn multistep_cmd(args: &MultistepArgs, file: &FileConfig) -> Result<()> {
    let mut exp = args.exp.clone();
    if exp.data.horizon.is_none() && file.horizon.is_none() {
        exp.data.horizon = Some(5);
    }
    let cfg = resolve_experiment(&exp, file)?;
    if cfg.prepare.horizon < 2 {
        return Err(config_err(format!(
            "multistep needs horizon >= 2, got {}",
            cfg.prepare.horizon
        )));
    }
    let dir = run_resolved(&exp, file, &cfg)?;
    if args.recursive {
        let one_step = ExperimentConfig {
            prepare: qpl_core::PrepareConfig {
                horizon: 1,
                ..cfg.prepare
            },
            ..cfg
        };
        let (_, data1) = prepare_dataset::<f64>(&one_step)?;
        let (model, _) = train(&data1.train, &one_step.lstm(), &one_step.train)
            .map_err(|e| anyhow::anyhow!("train: {e}"))?;
        let (_, dataset) = prepare_dataset::<f64>(&cfg)?;
        let report = recursive_eval(&model, &dataset.scaler, &dataset.test).context("evaluate")?;
        let summary = RunSummary::new(&cfg, &report);
        write_summary(&dir.join("recursive_summary.json"), &summary)?;
        println!("recursive per-step RMSE: {:?}", summary.per_step_rmse);
    }
    Ok(())
}
