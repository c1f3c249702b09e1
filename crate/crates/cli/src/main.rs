use clap::Parser;
use engagecast_cli::{run, stages, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(summary) => stages::emit(&summary),
        Err(e) => {
            eprintln!("{}", e.to_json());
            std::process::exit(e.exit_code());
        }
    }
}
