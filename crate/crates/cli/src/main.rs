use clap::Parser;
use parrondo_cli::{args::Cli, run};

fn main() {
    let cli = Cli::parse();
    std::process::exit(run(&cli));
}
