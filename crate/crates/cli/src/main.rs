use clap::Parser;
use disparity_cli::{run, Cli};

fn main() {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::try_parse().unwrap_or_else(|e| e.exit());
    if let Err(e) = run(cli, &argv) {
        eprintln!("error: {e}");
        std::process::exit(e.code);
    }
}
