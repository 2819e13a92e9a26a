use clap::Parser;

fn main() {
    let cli = cohirf::cli::Cli::parse();
    if let Err(e) = cohirf::cli::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
