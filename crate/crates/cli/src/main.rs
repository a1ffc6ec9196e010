use std::process::ExitCode;

use clap::Parser;
use conc_lab_cli::{configure_threads, execute, resolve, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = configure_threads().and_then(|()| resolve(&cli)).and_then(|cfg| execute(&cfg));
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("conc-lab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
