fn main() {
    std::process::exit(chanlearn::cli::main_with_args(std::env::args_os()));
}
