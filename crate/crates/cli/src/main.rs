use clap::Parser;
use dia_cli::app::{run, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("dia: {e}");
        std::process::exit(e.exit_code());
    }
}
