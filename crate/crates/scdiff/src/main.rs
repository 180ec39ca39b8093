use clap::Parser;

fn main() {
    let cli = scdiff::cli::Cli::parse();
    if let Err(e) = scdiff::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
