fn main() {
    std::process::exit(imuwave::cli::run(std::env::args_os()));
}
