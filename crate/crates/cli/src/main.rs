use clap::Parser;

fn main() {
    let cli = bbgp_cli::Cli::parse();
    match bbgp_cli::run(&cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
