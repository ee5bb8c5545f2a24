fn main() {
    std::process::exit(alphafactor::cli::main_with_args(std::env::args_os()));
}
