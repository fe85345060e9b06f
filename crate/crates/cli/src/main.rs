//! `smokesr`: simulate, sample, train, synthesize and evaluate from the
//! command line. See `docs/cli.md` for every flag and config key.

mod cli;
mod run;

use std::process::ExitCode;

use clap::Parser;
use smokesr::Error;

use cli::{Cli, Command};

/// Exit status per error class. Usage errors exit with 2 from clap.
fn exit_code(err: &anyhow::Error) -> u8 {
    let Some(e) = err.chain().find_map(|c| c.downcast_ref::<Error>()) else {
        return 1;
    };
    match e {
        Error::Config(_) | Error::InvalidArgument(_) => 3,
        Error::Io { .. } => 4,
        Error::BadMagic { .. } | Error::VersionMismatch { .. } | Error::TruncatedPayload { .. } => {
            5
        }
        Error::InvalidShape(_)
        | Error::DimensionMismatch(_)
        | Error::PatchOutOfBounds { .. }
        | Error::MissingHistory { .. }
        | Error::Uncovered(_) => 6,
        Error::NonFinite { .. }
        | Error::PoissonNotConverged { .. }
        | Error::Singular(_)
        | Error::Degenerate(_)
        | Error::SamplingExhausted { .. }
        | Error::EmptySplit(_) => 7,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }

    let result = match &cli.command {
        Command::Simulate(a) => run::simulate(a),
        Command::Sample(a) => run::sample(a),
        Command::Ksvd(a) => run::ksvd_cmd(a),
        Command::Train(a) => run::train(a),
        Command::Synthesize(a) => run::synthesize(a),
        Command::Eval(c) => run::eval(c),
        Command::Experiment(a) => run::experiment(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
