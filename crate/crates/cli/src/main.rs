mod args;
mod commands;
mod errors;
mod ingest;

use args::{CalibrateCmd, Cli, Command, SimCmd};
use clap::Parser;
use std::process::ExitCode;

fn configure_threads() {
    if let Ok(raw) = std::env::var("ECMMD_THREADS") {
        if let Ok(threads) = raw.parse::<usize>() {
            if threads > 0 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

fn main() -> ExitCode {
    configure_threads();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Test(args) => commands::run_test(args),
        Command::Gof(args) => commands::run_gof(args),
        Command::Calibrate(CalibrateCmd::Classify(args)) => commands::run_classify(args),
        Command::Calibrate(CalibrateCmd::Regress(args)) => commands::run_regress(args),
        Command::Sim(SimCmd::ClassCalib(args)) => commands::run_sim_class(args),
        Command::Sim(SimCmd::RegCalib(args)) => commands::run_sim_reg(args),
        Command::Sim(SimCmd::Gof(args)) => commands::run_sim_gof(args),
        Command::Sim(SimCmd::Oracle(args)) => commands::run_sim_oracle(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
