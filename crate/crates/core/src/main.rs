use clap::Parser;

use nested_ood::cli::{exit_code, run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(text) => println!("{text}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}
