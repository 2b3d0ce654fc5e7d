use clap::Parser;
use regiongrasp_service::cli::{error_json, run, Cli};

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("{}", error_json(&e));
        std::process::exit(1);
    }
}
