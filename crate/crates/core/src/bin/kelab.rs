fn main() {
    std::process::exit(kelab::cli::run(std::env::args_os()));
}
