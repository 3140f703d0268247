fn main() {
    std::process::exit(hashscreen::cli::main_with_args(std::env::args_os()));
}
