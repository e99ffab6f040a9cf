fn main() {
    std::process::exit(gvgcov_cli::run_cli(std::env::args_os()));
}
