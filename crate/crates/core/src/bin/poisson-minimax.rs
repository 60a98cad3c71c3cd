fn main() {
    std::process::exit(poisson_minimax::cli::main_with_args(std::env::args_os()));
}
