fn main() {
    std::process::exit(infinilog::cli::main_with_args(std::env::args_os()));
}
