fn main() {
    std::process::exit(coopsim::cli::main_with(std::env::args_os()));
}
