fn main() {
    std::process::exit(hs_calculus::cli::main_with_args(std::env::args_os()));
}
