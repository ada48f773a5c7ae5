use clap::Parser;

fn main() {
    let cli = encforge_cli::Cli::parse();
    if let Err(e) = encforge_cli::run(cli) {
        eprintln!("encforge: {e}");
        std::process::exit(e.exit_code());
    }
}
