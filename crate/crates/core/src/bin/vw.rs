fn main() {
    std::process::exit(volterra_wishart::cli::main_with_args(std::env::args_os()));
}
