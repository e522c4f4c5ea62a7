fn main() {
    std::process::exit(logfb::cli::run(std::env::args_os()));
}
