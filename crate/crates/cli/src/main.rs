use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CHIC_GLM_LOG", "warn")).init();
    let cli = chic_cli::Cli::parse();
    if let Err(e) = chic_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
