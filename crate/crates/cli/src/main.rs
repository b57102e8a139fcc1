mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Bad flags or missing required settings.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

const EXIT_USAGE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_TRANSPORT: u8 = 3;
const EXIT_CACHE_MISS: u8 = 4;

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<turnlink::Error>() {
            return match e {
                turnlink::Error::CacheMiss { .. } => EXIT_CACHE_MISS,
                turnlink::Error::Transport { .. }
                | turnlink::Error::Run { .. }
                | turnlink::Error::Protocol(_) => EXIT_TRANSPORT,
                _ => EXIT_VALIDATION,
            };
        }
    }
    EXIT_VALIDATION
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = config::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Ingest(a) => commands::ingest(a),
        Command::Annotate(a) => commands::annotate(a, &cfg),
        Command::Consolidate(a) => commands::consolidate(a, &cfg),
        Command::Agree(a) => commands::agree(a),
        Command::Features(a) => commands::features(a),
        Command::Cluster(a) => commands::cluster(a, &cfg),
        Command::Render(a) => commands::render(a, &cfg),
        Command::Report(a) => commands::report(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
