use clap::Parser;

fn main() {
    let cli = revnorm::harness::Cli::parse();
    std::process::exit(revnorm::harness::run(cli));
}
