fn main() {
    std::process::exit(gpopt::cli::run(std::env::args_os()));
}
