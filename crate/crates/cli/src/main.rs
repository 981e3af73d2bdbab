use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FAIR_LOG", "warn")).init();
    ExitCode::from(fair_cli::run(std::env::args_os()))
}
