use std::process::ExitCode;

use clap::Parser;
use hydrotrace_cli::{exit_code, run, Cli};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HYDROTRACE_LOG", "info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Some(m)) => {
            println!("{} {} -> {}", m.command, m.run_id, cli.out.display());
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
