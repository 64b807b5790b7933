use clap::Parser;

use blanc_eval::cli::{run, Cli};
use blanc_eval::FATAL_EXIT_CODE;

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(outcome) => std::process::exit(outcome.exit_code()),
        Err(e) => {
            eprintln!("{}", e.to_json());
            std::process::exit(FATAL_EXIT_CODE);
        }
    }
}
