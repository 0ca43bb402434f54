fn main() {
    std::process::exit(rwasim::cli::main_with(std::env::args_os()));
}
