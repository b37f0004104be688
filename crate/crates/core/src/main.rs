use clap::Parser;

fn main() {
    let cli = ficots::cli::Cli::parse();
    std::process::exit(ficots::cli::run(cli));
}
