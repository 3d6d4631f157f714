fn main() {
    std::process::exit(gcflow::cli::main_with_args(std::env::args_os()));
}
