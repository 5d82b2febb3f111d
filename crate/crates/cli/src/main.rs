use clap::Parser;

fn main() {
    let cli = delayrc_cli::Cli::parse();
    if let Err(e) = delayrc_cli::run(&cli) {
        eprintln!("delayrc: {e}");
        std::process::exit(e.exit_code());
    }
}
