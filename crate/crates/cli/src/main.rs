fn main() {
    std::process::exit(gridopt_cli::run_cli(std::env::args_os()));
}
