use clap::Parser;
use ttfm::cli::{self, Cli};

fn main() {
    let cli = Cli::parse();
    match cli::run(&cli) {
        Ok(outcome) => {
            for w in &outcome.warnings {
                eprintln!("{}", serde_json::json!({ "warning": w }));
            }
            for f in &outcome.files {
                println!("{}", f.display());
            }
        }
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": e.kind(), "message": e.to_string() }));
            std::process::exit(2);
        }
    }
}
