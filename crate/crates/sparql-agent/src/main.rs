use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = sparql_agent::cli::Cli::parse();
    std::process::exit(sparql_agent::cli::run(cli));
}
