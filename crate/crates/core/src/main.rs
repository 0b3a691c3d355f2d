use clap::Parser;
use mmvd::cli::{run, Cli};

fn main() {
    std::process::exit(run(Cli::parse()));
}
