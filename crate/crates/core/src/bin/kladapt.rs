fn main() {
    std::process::exit(kladapt::cli::main_with_args(std::env::args_os()));
}
