mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use critmat::ensemble::EnsembleSpec;
use critmat::runner::Runner;

use args::Cli;
use commands::{execute, Context};
use output::{BoxResult, Output};

const SEED_ENV: &str = "CRITMAT_SEED";

fn seed(cli: &Cli) -> BoxResult<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|e| format!("{SEED_ENV}={v:?} is not a u64: {e}").into()),
        Err(_) => Ok(cli.seed),
    }
}

fn run(cli: &Cli) -> BoxResult<u8> {
    let seed = seed(cli)?;
    if cli.workers == 0 {
        return Err("--workers must be at least 1".into());
    }
    let spec = match &cli.spec {
        Some(path) => Some(EnsembleSpec::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?),
        None if cli.command.spec_optional() => None,
        None => return Err(format!("{} needs --spec", cli.command.name()).into()),
    };
    let out = Output::create(&cli.out)?;
    let ctx = Context {
        spec: spec.as_ref(),
        runner: Runner::new(seed).with_workers(cli.workers),
        out: &out,
    };
    let code = if execute(cli, &ctx)?.pass { 0 } else { 2 };
    out.metadata(cli.command.name(), seed, cli.workers, code)?;
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
