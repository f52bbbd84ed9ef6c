use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = endoraw_cli::Cli::parse();
    if let Err(err) = endoraw_cli::run(cli) {
        // One machine-parseable line on standard error, nonzero exit.
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
