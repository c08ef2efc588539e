fn main() {
    env_logger::Builder::new()
        .filter_level(log::LevelFilter::Info)
        .parse_default_env()
        .format_timestamp(None)
        .init();
    std::process::exit(covtrace_cli::run(std::env::args_os()));
}
