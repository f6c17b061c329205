use clap::Parser;

fn main() {
    std::process::exit(fracbvp_cli::run(fracbvp_cli::Cli::parse()));
}
