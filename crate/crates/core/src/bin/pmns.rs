fn main() {
    std::process::exit(pmns::cli::main_with_args(std::env::args_os()));
}
