use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    std::process::exit(rfot::runner::main_with(rfot::runner::Cli::parse()));
}
