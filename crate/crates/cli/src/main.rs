use clap::Parser;
use samam_cli::run::{dispatch, Cli};

fn main() {
    if let Err(e) = dispatch(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
