use clap::Parser;

fn main() {
    let cli = brw_cli::Cli::parse();
    if let Err(e) = brw_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
