use std::process::ExitCode;

use clap::Parser;
use tracing_subscriber::EnvFilter;
use xrflux_cli::Cli;

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match xrflux_cli::run(cli) {
        Ok(written) => {
            for p in written {
                tracing::info!(path = %p.display(), "wrote");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
