fn main() {
    std::process::exit(woodlog::cli::run(std::env::args_os()));
}
