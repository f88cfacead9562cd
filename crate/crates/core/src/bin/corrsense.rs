fn main() {
    std::process::exit(corrsense::cli::main_with_args(std::env::args_os()));
}
