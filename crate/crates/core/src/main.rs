use modrl::runtime::RunOptions;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let code = modrl::cli::main_with(std::env::args().skip(1), &RunOptions::default());
    std::process::exit(code);
}
