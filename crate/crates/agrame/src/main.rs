fn main() {
    std::process::exit(agrame::cli::main_with_args(std::env::args_os()));
}
