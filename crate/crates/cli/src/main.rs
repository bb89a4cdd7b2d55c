#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use config::{Cli, Command, ConfigError, FileConfig};

fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Simulate(a) => commands::simulate(a, &file),
        Command::Lyapunov(a) => commands::lyapunov_cmd(a, &file),
        Command::PhaseScan(a) => commands::phase_scan_cmd(a, &file),
        Command::Prepare(a) => commands::prepare_cmd(a, &file),
        Command::Train(a) => commands::train_cmd(a, &file),
        Command::Eval(a) => commands::eval_cmd(a, &file),
        Command::Run(a) => commands::run_cmd(a, &file),
        Command::SweepUnits(a) => commands::sweep_cmd(a, &file),
        Command::Multistep(a) => commands::multistep_cmd(a, &file),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
