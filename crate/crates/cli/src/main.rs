mod args;
mod commands;
mod plot;

use std::process::ExitCode;

use clap::Parser;

use args::Cli;

fn init_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("EVFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("EVFLOW_THREADS must be a positive integer, got `{raw}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    if cli.print_config {
        commands::print_config(&cli.command);
        return ExitCode::SUCCESS;
    }
    if let Err(msg) = init_threads() {
        eprintln!("error[Usage]: {msg}");
        return ExitCode::from(2);
    }
    match commands::run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
