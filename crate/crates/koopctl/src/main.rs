fn main() {
    std::process::exit(koopctl::cli::run(std::env::args_os()));
}
