use clap::Parser;

fn main() {
    let cli = qtomo::cli::Cli::parse();
    if let Err(e) = qtomo::cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
