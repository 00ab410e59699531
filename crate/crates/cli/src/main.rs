use clap::Parser;

use camal_cli::{commands, Cli};

fn main() {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).format_timestamp_secs().init();
    if let Err(e) = commands::run(&cli) {
        eprintln!("camal {}: error: {e}", cli.command.name());
        std::process::exit(e.exit_code());
    }
}
