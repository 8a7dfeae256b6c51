fn main() {
    std::process::exit(fracobs::cli::main_from(std::env::args_os()));
}
