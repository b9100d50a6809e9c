use clap::Parser;
use kernel_koopman_cli::{run, Cli};

fn main() {
    match run(Cli::parse()) {
        Ok(summary) => print!(
            "{summary}{}",
            if summary.ends_with('\n') { "" } else { "\n" }
        ),
        Err(e) => {
            eprintln!("kkdmd: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
