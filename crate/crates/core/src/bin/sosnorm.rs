fn main() {
    std::process::exit(sosnorm::cli::main_with_args(std::env::args_os()));
}
