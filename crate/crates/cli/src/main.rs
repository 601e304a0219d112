//! `dbdesc`: describe a database's tables and columns and emit M-Schema.
//!
//! Exit codes: 0 success, 2 configuration, 3 database, 4 model backend,
//! 5 file output or cache.

mod config;
mod error;
mod run;

use clap::Parser;

use config::{Cli, Command};
use error::CliError;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    let result = match &cli.command {
        Command::Generate(args) => args.resolve().and_then(|cfg| {
            log::info!("generating {} in {} mode", cfg.db.redacted(), cfg.mode);
            run::generate(&cfg, &mut stdout)
        }),
        Command::Inspect(args) => args.resolve().and_then(|cfg| run::inspect(&cfg, args.json, &mut stdout)),
    };
    if let Err(err) = result {
        report(&err);
        std::process::exit(err.exit_code());
    }
}

fn report(err: &CliError) {
    eprintln!("error: {err}");
}
