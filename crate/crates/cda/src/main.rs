fn main() {
    std::process::exit(cda::cli::run(std::env::args_os()));
}
