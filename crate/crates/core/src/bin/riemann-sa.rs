fn main() {
    std::process::exit(riemann_sa::harness::cli::main_with_args(std::env::args_os()));
}
